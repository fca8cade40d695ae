#pragma once

// Checkpoint = JSON manifest + one raw little-endian float64 blob.
// Layout is described in docs/checkpoint_format.md.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "steerq/tensor.hpp"

namespace steerq {

struct StoredArray {
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, StoredArray>> arrays;  // in file order

  const StoredArray& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

/// Writes `manifest` and its blob (same path with extension ".bin").
void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ckpt);
/// Throws std::runtime_error on missing files, malformed manifests or size mismatches.
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

std::filesystem::path blob_path(const std::filesystem::path& manifest);

}  // namespace steerq
