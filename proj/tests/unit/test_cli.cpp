#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "steerq/cli.hpp"
#include "steerq/config.hpp"
#include "steerq/curves.hpp"

using namespace steerq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "steerq");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto* saved_out = std::cout.rdbuf(out.rdbuf());
  auto* saved_err = std::cerr.rdbuf(err.rdbuf());
  const int code = cli::run(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(saved_out);
  std::cerr.rdbuf(saved_err);
  return {code, out.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("steerq_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const json kSmall = json::parse(R"({
  "env": { "grid_size": 8, "workspace": 4 },
  "net": { "variant": "equi_fcn" },
  "agent": { "episodes": 2, "pretrain_steps": 2, "expert_steps": 4, "expert_augment": 1, "batch": 4,
             "eval_interval": 1, "eval_episodes": 2 },
  "verify": { "inputs": 2, "kernel_draws": 2, "grad_probes": 3, "env_samples": 50 }
})");

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  write_file(p, j.dump());
  return p;
}

// A finished run directory holding only what `curves` reads.
fs::path fake_run(const fs::path& root, const std::string& name, const std::string& variant,
                  const std::string& eval_csv) {
  const fs::path dir = root / name;
  fs::create_directories(dir);
  write_file(dir / "config.resolved.json", json{{"net", {{"variant", variant}}}}.dump());
  write_file(dir / "eval.csv", "episode,greedy_success_rate\n" + eval_csv);
  return dir;
}

}  // namespace

TEST_CASE("standard error by hand") {
  CHECK(mean_of({0.4, 0.8}) == doctest::Approx(0.6).epsilon(1e-15));
  // deviations +-0.2: sqrt(0.08 / 1) / sqrt(2) = 0.2
  CHECK(standard_error({0.4, 0.8}) == doctest::Approx(0.2).epsilon(1e-14));
  // deviations -0.2, -0.1, 0.3: sqrt(0.14 / 2) / sqrt(3)
  CHECK(standard_error({0.1, 0.2, 0.6}) == doctest::Approx(std::sqrt(0.07 / 3.0)).epsilon(1e-14));
  CHECK(standard_error({0.7}) == 0.0);
  CHECK(standard_error({0.3, 0.3, 0.3, 0.3}) == 0.0);
}

TEST_CASE("aggregation of synthetic runs") {
  const std::vector<RunRecord> runs{{"equi_fcn", {{0, 0.2}, {50, 0.4}}},
                                    {"conv_fcn", {{0, 0.1}, {50, 0.3}}},
                                    {"equi_fcn", {{0, 0.4}, {50, 0.8}}}};
  const auto pts = aggregate_eval(runs);
  REQUIRE(pts.size() == 4);
  CHECK(pts[0].variant == "equi_fcn");
  CHECK(pts[0].episode == 0);
  CHECK(pts[0].runs == 2);
  CHECK(pts[0].mean == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(pts[0].stderr_mean == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(pts[1].episode == 50);
  CHECK(pts[1].mean == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(pts[1].stderr_mean == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(pts[2].variant == "conv_fcn");
  CHECK(pts[2].runs == 1);
  CHECK(pts[2].mean == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(pts[2].stderr_mean == 0.0);

  std::ostringstream csv;
  write_aggregate_csv(csv, {pts[1]});
  CHECK(csv.str() == "variant,episode,runs,mean_greedy_success_rate,stderr\nequi_fcn,50,2,0.6,0.2\n");
}

TEST_CASE("curves command over synthetic run directories") {
  const fs::path root = scratch("curves");
  const auto a = fake_run(root, "a", "equi_asr", "0,0.25\n50,0.5\n");
  const auto b = fake_run(root, "b", "equi_asr", "0,0.25\n50,0.5\n");
  const auto c = fake_run(root, "c", "equi_asr", "0,0.25\n50,0.5\n");
  const auto d = fake_run(root, "d", "equi_asr", "0,0.25\n50,0.5\n");
  const fs::path out = root / "agg.csv";
  const auto r = run_cli({"curves", "--runs", a.string(), b.string(), c.string(), d.string(), "--out",
                          out.string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(slurp(out) ==
        "variant,episode,runs,mean_greedy_success_rate,stderr\n"
        "equi_asr,0,4,0.25,0\n"
        "equi_asr,50,4,0.5,0\n");

  const auto single = run_cli({"curves", "--runs", a.string()});
  CHECK(single.code == cli::kExitOk);
  CHECK(single.out.find("equi_asr,50,1,0.5,0\n") != std::string::npos);

  CHECK(run_cli({"curves", "--runs", (root / "missing").string()}).code == cli::kExitConfig);
  CHECK(run_cli({"eval", "--runs", a.string()}).code == cli::kExitConfig);  // no checkpoint
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
  json j = kSmall;
  j["agent"]["episodez"] = 3;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = kSmall;
  j["extra"] = 1;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = kSmall;
  j["net"]["variant"] = "equi_mlp";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = kSmall;
  j["net"]["widths"] = {8, 16, 30};
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = kSmall;
  j["agent"]["lr"] = "fast";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);

  const RunConfig c = run_config_from_json(kSmall);
  CHECK(run_config_from_json(to_json(c)).agent.episodes == 2);
  CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));
}

TEST_CASE("seed precedence: flag, then STEERQ_SEED, then config, then 0") {
  RunConfig c = run_config_from_json(kSmall);
  unsetenv("STEERQ_SEED");
  CHECK(resolve_seed(std::nullopt, c) == 0);
  c.seed = 5;
  CHECK(resolve_seed(std::nullopt, c) == 5);
  setenv("STEERQ_SEED", "9", 1);
  CHECK(resolve_seed(std::nullopt, c) == 9);
  CHECK(resolve_seed(std::uint64_t{3}, c) == 3);
  setenv("STEERQ_SEED", "nine", 1);
  CHECK_THROWS_AS(resolve_seed(std::nullopt, c), ConfigError);
  unsetenv("STEERQ_SEED");
}

TEST_CASE("train command outputs and exit codes") {
  const fs::path root = scratch("train");
  CHECK(run_cli({"train", "--config", (root / "nope.json").string(), "--out", (root / "x").string()}).code ==
        cli::kExitConfig);

  json zero = kSmall;
  zero["agent"]["episodes"] = 0;
  const fs::path out = root / "zero";
  const auto r = run_cli({"train", "--config", write_config(root, zero).string(), "--out", out.string(),
                          "--seed", "4", "--quiet"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(json::parse(r.out)["seed"] == 4);
  CHECK(read_curve_csv(out / "curve.csv").size() == 1);
  CHECK(read_eval_csv(out / "eval.csv").size() == 1);
  const RunConfig resolved = load_run_config(out / "config.resolved.json");
  CHECK(resolved.seed == 4u);
  CHECK(resolved.agent.episodes == 0);

  const auto ev = run_cli({"eval", "--runs", out.string(), "--episodes", "3"});
  CHECK(ev.code == cli::kExitOk);
  CHECK(ev.out.rfind("checkpoint,variant,seed,episodes,greedy_success_rate\n", 0) == 0);

  json diverge = kSmall;
  diverge["agent"]["lr"] = 1e300;
  const fs::path dcfg = root / "diverge.json";
  write_file(dcfg, diverge.dump());
  CHECK(run_cli({"train", "--config", dcfg.string(), "--out", (root / "d").string(), "--quiet"}).code ==
        cli::kExitDiverged);
}

TEST_CASE("verify and oracle commands") {
  const fs::path root = scratch("verify");
  const fs::path cfg = write_config(root, kSmall);
  const auto ok = run_cli({"verify", "--config", cfg.string()});
  CHECK(ok.code == cli::kExitOk);
  const json report = json::parse(ok.out);
  CHECK(report["pass"] == true);
  for (const auto& c : report["checks"]) {
    CHECK(c.contains("check_name"));
    CHECK(c.contains("max_error"));
    CHECK(c.contains("tolerance"));
    CHECK(c.contains("pass"));
  }
  CHECK(run_cli({"verify", "--config", cfg.string(), "--corrupt-kernel"}).code == cli::kExitVerifyFailed);

  json conv = kSmall;
  conv["net"]["variant"] = "conv_fcn";
  const auto cv = run_cli({"verify", "--config", write_config(root, conv).string()});
  CHECK(cv.code == cli::kExitOk);
  bool excluded = false;
  const json conv_report = json::parse(cv.out);
  for (const auto& c : conv_report["checks"])
    if (c["check_name"] == "network_equivariance") excluded = c["expected_fail"] == true && c["pass"] == false;
  CHECK(excluded);

  json tiny = json::parse(R"({"env": {"grid_size": 4, "workspace": 4, "dominoes": 2, "height_limit": 2}})");
  const fs::path tcfg = root / "tiny.json";
  write_file(tcfg, tiny.dump());
  const auto orc = run_cli({"oracle", "--config", tcfg.string()});
  CHECK(orc.code == cli::kExitOk);
  CHECK(json::parse(orc.out)["max_invariance_violation"].get<double>() < 1e-9);
  CHECK(run_cli({"oracle", "--config", tcfg.string(), "--cap", "10"}).code == cli::kExitStateCap);
}
