#include "steerq/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace steerq {

namespace {

constexpr const char* kFormat = "steerq-checkpoint";
constexpr int kVersion = 1;

void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

const StoredArray& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, a] : arrays)
    if (n == name) return a;
  throw std::runtime_error("checkpoint has no array named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& entry : arrays)
    if (entry.first == name) return true;
  return false;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  std::filesystem::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["dtype"] = "float64";
  j["byte_order"] = "little";
  j["blob"] = blob_path(manifest).filename().string();
  j["metadata"] = ckpt.metadata;
  nlohmann::json entries = nlohmann::json::array();
  std::string blob;
  for (const auto& [name, arr] : ckpt.arrays) {
    if (arr.values.size() != shape_numel(arr.shape)) {
      throw std::invalid_argument("checkpoint array '" + name + "' does not match its shape");
    }
    entries.push_back({{"name", name},
                       {"shape", arr.shape},
                       {"offset", blob.size()},
                       {"bytes", arr.values.size() * 8}});
    for (double v : arr.values) put_le(blob, v);
  }
  j["arrays"] = entries;
  j["total_bytes"] = blob.size();

  std::ofstream bin(blob_path(manifest), std::ios::binary | std::ios::trunc);
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream man(manifest, std::ios::trunc);
  man << j.dump(2) << "\n";
  if (!bin || !man) throw std::runtime_error("could not write checkpoint " + manifest.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
  std::ifstream man(manifest);
  if (!man) throw std::runtime_error("cannot open checkpoint manifest " + manifest.string());
  nlohmann::json j;
  try {
    man >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (j.value("format", "") != kFormat || j.value("dtype", "") != "float64") {
    throw std::runtime_error("unsupported checkpoint format in " + manifest.string());
  }
  const auto bpath = manifest.parent_path() / j.at("blob").get<std::string>();
  std::ifstream bin(bpath, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open checkpoint blob " + bpath.string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)),
                                  std::istreambuf_iterator<char>());
  if (blob.size() != j.at("total_bytes").get<std::size_t>()) {
    throw std::runtime_error("checkpoint blob size mismatch");
  }
  Checkpoint ckpt;
  ckpt.metadata = j.value("metadata", nlohmann::json::object());
  for (const auto& e : j.at("arrays")) {
    StoredArray arr;
    arr.shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto bytes = e.at("bytes").get<std::size_t>();
    if (bytes != shape_numel(arr.shape) * 8 || offset + bytes > blob.size()) {
      throw std::runtime_error("checkpoint entry out of range: " + e.at("name").get<std::string>());
    }
    arr.values.resize(bytes / 8);
    for (std::size_t i = 0; i < arr.values.size(); ++i)
      arr.values[i] = get_le(blob.data() + offset + 8 * i);
    ckpt.arrays.emplace_back(e.at("name").get<std::string>(), std::move(arr));
  }
  return ckpt;
}

}  // namespace steerq
