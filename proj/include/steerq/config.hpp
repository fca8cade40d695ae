#pragma once

// JSON run configuration shared by every CLI command.
//
//   { "seed": 1, "out": "runs/equi_fcn_1",
//     "env":    { "grid_size": 16, ... },
//     "net":    { "variant": "equi_fcn", "widths": [8,16,32], ... },
//     "agent":  { "episodes": 100, ... },
//     "oracle": { "gamma": 0.95, "tol": 1e-10, "state_cap": 2000000 },
//     "verify": { "inputs": 50, ... } }
//
// Every block and key is optional; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "steerq/agent.hpp"

namespace steerq {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OracleSettings {
  double gamma = 0.95;
  double tol = 1e-10;
  std::uint64_t state_cap = 2'000'000;
};

struct VerifySettings {
  int inputs = 50;        ///< random inputs per two-path check
  int kernel_draws = 100;
  int grad_probes = 20;
  int env_samples = 4000;
};

struct RunConfig {
  EnvConfig env;
  Variant variant = Variant::EquiFcn;
  NetConfig net;
  TrainConfig agent;
  OracleSettings oracle;
  VerifySettings verify;
  std::optional<std::uint64_t> seed;
  std::string out;

  /// Network settings with the variant's architecture applied.
  NetConfig network() const { return variant_net_config(variant, net); }
};

/// Throws ConfigError naming the offending key.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
/// Effective configuration with every default filled in.
nlohmann::json to_json(const RunConfig& c);

/// --seed flag, then the STEERQ_SEED environment variable, then the config, then 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig& c);

}  // namespace steerq
