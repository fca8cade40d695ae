#include "steerq/cli.hpp"

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "steerq/checks.hpp"
#include "steerq/config.hpp"
#include "steerq/curves.hpp"

namespace steerq::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

std::unique_ptr<QNetwork> build_network(const RunConfig& c, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 1);
  try {
    return make_network(c.network(), c.env, rng);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// Network and configuration stored in a training checkpoint.
struct LoadedRun {
  RunConfig config;
  std::unique_ptr<QNetwork> net;
};

LoadedRun load_trained(const fs::path& manifest) {
  if (!fs::exists(manifest)) throw IoError("missing checkpoint " + manifest.string());
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(manifest);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  if (!ckpt.metadata.contains("config")) throw IoError(manifest.string() + ": no config in metadata");
  LoadedRun r{run_config_from_json(ckpt.metadata["config"]), nullptr};
  r.net = build_network(r.config, 0);
  try {
    load_network(ckpt, *r.net);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  return r;
}

int train_command(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                  const std::string& out_flag, bool quiet) {
  RunConfig c = load_run_config(config_path);
  const std::uint64_t seed = resolve_seed(seed_flag, c);
  const fs::path out = out_flag.empty() ? fs::path(c.out) : fs::path(out_flag);
  if (out.empty()) throw ConfigError("no output directory: pass --out or set \"out\" in the config");
  c.seed = seed;
  build_network(c, seed);  // surfaces architecture errors before any output is written

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  json resolved = to_json(c);
  resolved["out"] = out.string();
  write_text(out / "config.resolved.json", resolved.dump(2) + "\n");

  const CurveCallback progress = [&](const CurveRow& r) {
    if (quiet || (r.episode % 10 != 0 && r.episode != c.agent.episodes)) return;
    std::cerr << "episode " << r.episode << "/" << c.agent.episodes << " env_steps " << r.env_steps
              << " loss " << r.loss << " epsilon " << r.epsilon << "\n";
  };
  TrainResult result;
  try {
    result = train(c.env, c.net, c.variant, c.agent, seed, progress);
  } catch (const TrainingDiverged& e) {
    std::cerr << "steerq train: " << e.what() << "\n";
    return kExitDiverged;
  }
  write_curve_csv(out / "curve.csv", result.curve);
  write_eval_csv(out / "eval.csv", result.eval);
  // the output directory is left out so reruns elsewhere give identical files
  json meta{{"config", to_json(c)},
            {"variant", to_string(c.variant)},
            {"seed", seed},
            {"grad_steps", result.grad_steps}};
  meta["config"].erase("out");
  save_checkpoint(out / "checkpoint.json", network_checkpoint(*result.net, meta));

  json summary{{"out", out.string()},
               {"variant", to_string(c.variant)},
               {"seed", seed},
               {"episodes", c.agent.episodes},
               {"grad_steps", result.grad_steps}};
  if (!result.eval.empty()) summary["final_greedy_success_rate"] = result.eval.back().greedy_success_rate;
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

int verify_command(const std::string& config_path, const std::string& checkpoint,
                   std::optional<std::uint64_t> seed_flag, bool corrupt_kernel) {
  RunConfig c = load_run_config(config_path);
  const std::uint64_t seed = resolve_seed(seed_flag, c);
  std::unique_ptr<QNetwork> net;
  if (checkpoint.empty()) {
    net = build_network(c, seed);
  } else {
    LoadedRun run = load_trained(checkpoint);
    c.env = run.config.env;
    c.net = run.config.net;
    c.variant = run.config.variant;
    net = std::move(run.net);
  }
  Rng rng = derive_rng(seed, 0x766572);
  const VerifySettings& v = c.verify;
  std::vector<checks::CheckResult> results;
  results.push_back(checks::kernel_constraint(v.kernel_draws, rng, corrupt_kernel));
  results.push_back(checks::layer_equivariance(Group::cyclic(4), v.inputs, rng));
  results.push_back(checks::layer_equivariance(Group::dihedral_group(4), v.inputs, rng));
  results.push_back(checks::network_equivariance(*net, c.env, v.inputs, rng));
  results.push_back(checks::env_invariance(GridStack(c.env), v.env_samples, rng));
  for (auto& r : checks::op_gradients(v.grad_probes, rng)) results.push_back(std::move(r));
  results.push_back(checks::network_gradients(*net, c.env, v.grad_probes, rng));
  results.push_back(checks::deictic_permutation(v.inputs, rng));

  const bool pass = checks::all_pass(results);
  json report{{"variant", to_string(c.variant)},
              {"mechanism", to_string(c.net.mechanism)},
              {"weights", checkpoint.empty() ? "random" : checkpoint},
              {"checks", checks::to_json(results)},
              {"pass", pass}};
  std::cout << report.dump(2) << "\n";
  return pass ? kExitOk : kExitVerifyFailed;
}

int oracle_command(const std::string& config_path, std::optional<double> gamma,
                   std::optional<std::uint64_t> cap) {
  RunConfig c = load_run_config(config_path);
  if (gamma) c.oracle.gamma = *gamma;
  if (cap) c.oracle.state_cap = *cap;
  if (c.oracle.gamma < 0 || c.oracle.gamma >= 1) throw ConfigError("gamma must lie in [0,1)");
  SmallMdp mdp;
  try {
    mdp = enumerate_small_mdp(c.env, c.oracle.state_cap);
  } catch (const StateCapExceeded& e) {
    std::cout << json{{"error", e.what()}, {"state_cap", c.oracle.state_cap}}.dump(2) << "\n";
    return kExitStateCap;
  }
  const checks::CheckResult env_check = checks::mdp_invariance(mdp);
  const OracleResult q = value_iteration(mdp, c.oracle.gamma, c.oracle.tol);
  const double violation = oracle_invariance_error(mdp, q.q);
  constexpr double tolerance = 1e-9;
  const bool pass = env_check.pass && violation < tolerance;
  json report{{"states", mdp.states.size()},
              {"actions", mdp.actions},
              {"gamma", c.oracle.gamma},
              {"iterations", q.iterations},
              {"residual", q.residual},
              {"env_checks", checks::to_json(env_check)},
              {"max_invariance_violation", violation},
              {"tolerance", tolerance},
              {"pass", pass}};
  std::cout << report.dump(2) << "\n";
  return pass ? kExitOk : kExitVerifyFailed;
}

int eval_command(const std::vector<std::string>& runs, const std::vector<std::string>& checkpoints,
                 int episodes, std::optional<std::uint64_t> seed) {
  std::vector<fs::path> manifests;
  for (const auto& r : runs) manifests.push_back(fs::path(r) / "checkpoint.json");
  for (const auto& c : checkpoints) manifests.push_back(c);
  if (manifests.empty()) throw ConfigError("eval needs --runs or --checkpoint");
  std::vector<LoadedRun> loaded;
  for (const auto& m : manifests) loaded.push_back(load_trained(m));
  std::cout << "checkpoint,variant,seed,episodes,greedy_success_rate\n";
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    const auto& m = manifests[i];
    const LoadedRun& run = loaded[i];
    const int n = episodes > 0 ? episodes : run.config.agent.eval_episodes;
    const std::uint64_t base = seed.value_or(run.config.agent.eval_seed);
    const double rate = greedy_success_rate(*run.net, GridStack(run.config.env), n, base);
    std::cout << m.string() << ',' << to_string(run.config.variant) << ','
              << run.config.seed.value_or(0) << ',' << n << ',' << rate << "\n";
  }
  return kExitOk;
}

int curves_command(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<RunRecord> records;
  for (const auto& r : runs) {
    if (!fs::exists(fs::path(r) / "eval.csv")) throw IoError("missing " + (fs::path(r) / "eval.csv").string());
    try {
      records.push_back(load_run(r));
    } catch (const std::runtime_error& e) {
      throw IoError(e.what());
    }
  }
  const auto points = aggregate_eval(records);
  if (out.empty()) {
    write_aggregate_csv(std::cout, points);
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("cannot write " + out);
    write_aggregate_csv(f, points);
  }
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"steerq: equivariant Q-learning in spatial action spaces"};
  app.require_subcommand(1);

  std::string config, out, checkpoint;
  std::optional<std::uint64_t> seed, cap;
  std::optional<double> gamma;
  bool quiet = false, corrupt = false;
  int episodes = 0;
  std::vector<std::string> runs, checkpoints;

  auto* train = app.add_subcommand("train", "train one variant and write curves and a checkpoint");
  train->add_option("--config", config, "run configuration (JSON)")->required();
  train->add_option("--seed", seed, "seed (overrides STEERQ_SEED and the config)");
  train->add_option("--out", out, "output directory (overrides the config)");
  train->add_flag("--quiet", quiet, "no progress on stderr");

  auto* verify = app.add_subcommand("verify", "run the equivariance and gradient property battery");
  verify->add_option("--config", config, "run configuration (JSON)")->required();
  verify->add_option("--checkpoint", checkpoint, "check trained weights instead of random ones");
  verify->add_option("--seed", seed, "seed for random weights and inputs");
  verify->add_flag("--corrupt-kernel", corrupt, "perturb expanded kernels (negative control)");

  auto* oracle = app.add_subcommand("oracle", "exact value iteration on a tiny GridStack MDP");
  oracle->add_option("--config", config, "run configuration (JSON)")->required();
  oracle->add_option("--gamma", gamma, "discount (overrides oracle.gamma)");
  oracle->add_option("--cap", cap, "state enumeration cap (overrides oracle.state_cap)");

  auto* eval = app.add_subcommand("eval", "greedy evaluation of trained checkpoints");
  eval->add_option("--runs", runs, "training output directories");
  eval->add_option("--checkpoint", checkpoints, "checkpoint manifests");
  eval->add_option("--episodes", episodes, "episodes per checkpoint (default: the run's eval_episodes)");
  eval->add_option("--seed", seed, "first reset seed (default: the run's eval_seed)");

  auto* curves = app.add_subcommand("curves", "aggregate evaluation curves over seeds");
  curves->add_option("--runs", runs, "training output directories")->required();
  curves->add_option("--out", out, "output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return train_command(config, seed, out, quiet);
    if (*verify) return verify_command(config, checkpoint, seed, corrupt);
    if (*oracle) return oracle_command(config, gamma, cap);
    if (*eval) return eval_command(runs, checkpoints, episodes, seed);
    if (*curves) return curves_command(runs, out);
  } catch (const ConfigError& e) {
    std::cerr << "steerq: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "steerq: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "steerq: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace steerq::cli
