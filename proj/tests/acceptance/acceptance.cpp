// Acceptance battery. Prints one PASS/FAIL line per selected criterion and
// exits non-zero when any of them fails.
//
//   steerq_acceptance                 all nine criteria
//   steerq_acceptance 1 2 3 4 5 7 9   property criteria only (minutes)
//   steerq_acceptance 6 8 --out DIR   multi-seed training comparisons

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "steerq/checks.hpp"
#include "steerq/cli.hpp"
#include "steerq/config.hpp"
#include "steerq/curves.hpp"
#include "steerq/ops.hpp"

using namespace steerq;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = STEERQ_CONFIG_DIR;
constexpr int kSeeds = 4;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RunConfig config(const std::string& name) { return load_run_config(kConfigs / (name + ".json")); }

std::unique_ptr<QNetwork> random_net(const RunConfig& c, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 1);
  return make_network(c.network(), c.env, rng);
}

// Every check must pass; the detail lists the worst error of each.
void absorb(const checks::CheckResult& r, bool& pass, std::string& detail) {
  pass = pass && r.pass;
  detail += " " + r.name + "=" + fmt("%.2e", r.max_error);
}

Outcome kernel_constraint() {
  Stopwatch sw;
  Rng rng = derive_rng(11, 0);
  const auto r = checks::kernel_constraint(100, rng);
  const double t = sw.seconds();
  return {r.pass && t < 5.0,
          "max error " + fmt("%.2e", r.max_error) + " (tol 1e-12), 100 draws, " + fmt("%.2f", t) +
              " s (limit 5 s)"};
}

Outcome equivariance() {
  Stopwatch sw;
  Rng rng = derive_rng(12, 0);
  bool pass = true;
  std::string detail;
  absorb(checks::layer_equivariance(Group::cyclic(4), 50, rng), pass, detail);
  absorb(checks::layer_equivariance(Group::dihedral_group(4), 50, rng), pass, detail);
  for (const char* name : {"equi_fcn", "equi_asr"}) {
    const RunConfig c = config(name);
    auto r = checks::network_equivariance(*random_net(c, 12), c.env, 50, rng);
    r.name = name;
    absorb(r, pass, detail);
  }
  for (const char* name : {"conv_fcn", "conv_asr"}) {
    const RunConfig c = config(name);
    const auto r = checks::network_equivariance(*random_net(c, 12), c.env, 50, rng);
    pass = pass && r.max_error >= 1e-3;
    detail += std::string(" ") + name + "=" + fmt("%.2e", r.max_error) + "(needs>=1e-3)";
  }
  const double t = sw.seconds();
  pass = pass && t < 30.0;
  return {pass, "50 inputs, tol 1e-9;" + detail + "; " + fmt("%.1f", t) + " s (limit 30 s)"};
}

Outcome gradients() {
  Stopwatch sw;
  Rng rng = derive_rng(13, 0);
  bool pass = true;
  double worst = 0.0;
  std::string failed;
  auto take = [&](const checks::CheckResult& r) {
    pass = pass && r.pass;
    worst = std::max(worst, r.max_error);
    if (!r.pass) failed += " " + r.name;
  };
  const auto ops = checks::op_gradients(20, rng);
  for (const auto& r : ops) take(r);
  int nets = 0;
  for (const char* name : {"equi_fcn", "equi_asr", "equi_fcn_lift", "equi_asr_lift"}) {
    const RunConfig c = config(name);
    take(checks::network_gradients(*random_net(c, 13), c.env, 20, rng));
    ++nets;
  }
  const double t = sw.seconds();
  pass = pass && t < 60.0;
  return {pass, std::to_string(ops.size()) + " ops + " + std::to_string(nets) +
                    " full networks, 20 probes each, worst relative error " + fmt("%.2e", worst) +
                    " (tol 1e-5), " + fmt("%.1f", t) + " s (limit 60 s)" +
                    (failed.empty() ? "" : "; failed:" + failed)};
}

Outcome oracle() {
  Stopwatch sw;
  const RunConfig c = config("tiny_oracle");
  const SmallMdp mdp = enumerate_small_mdp(c.env, c.oracle.state_cap);
  Rng rng = derive_rng(14, 0);
  const auto table = checks::mdp_invariance(mdp);
  const auto sampled = checks::env_invariance(GridStack(c.env), 4000, rng);
  const OracleResult q = value_iteration(mdp, c.oracle.gamma, 1e-10);
  const double violation = oracle_invariance_error(mdp, q.q);
  const double t = sw.seconds();
  const bool pass = table.pass && sampled.pass && violation < 1e-9 && t < 300.0;
  return {pass, std::to_string(mdp.states.size()) + " states, env table mismatches " +
                    fmt("%.0f", table.max_error) + ", sampled mismatches " + fmt("%.0f", sampled.max_error) +
                    ", " + std::to_string(q.iterations) + " sweeps, max |Q(s,a)-Q(gs,ga)| " +
                    fmt("%.2e", violation) + " (tol 1e-9), " + fmt("%.1f", t) + " s (limit 300 s)"};
}

Outcome margin_semantics() {
  const Tensor q = Tensor({1, 3}, std::vector<double>{0.5, 0.3, 0.45});
  const double example = ops::strict_margin_loss(q, {0}, {true}, 0.1).item();
  const Tensor dominant = Tensor({1, 3}, std::vector<double>{0.9, 0.3, 0.45});
  const double empty = ops::strict_margin_loss(dominant, {0}, {true}, 0.1).item();
  const double non_expert = ops::strict_margin_loss(q, {0}, {false}, 0.1).item();
  const bool pass = std::abs(example - 0.05) < 1e-12 && empty == 0.0 && non_expert == 0.0;
  return {pass, "example " + fmt("%.17g", example) + " (expected 0.05, tol 1e-12), empty set " +
                    fmt("%g", empty) + ", non-expert " + fmt("%g", non_expert)};
}

Outcome deictic() {
  Rng rng = derive_rng(17, 0);
  const auto r = checks::deictic_permutation(50, rng);
  return {r.pass, "max error " + fmt("%.2e", r.max_error) + " (tol 1e-9), 50 inputs"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "steerq");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream sink;
  auto* saved = std::cout.rdbuf(sink.rdbuf());
  const int code = cli::run(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(saved);
  return code;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "steerq_acceptance_determinism";
  fs::remove_all(root);
  bool pass = true;
  std::string detail;
  for (const char* name : {"smoke", "smoke_asr"}) {
    const std::string cfg = (kConfigs / (std::string(name) + ".json")).string();
    const fs::path a = root / name / "a", b = root / name / "b";
    const int ca = run_cli({"train", "--config", cfg, "--seed", "7", "--out", a.string(), "--quiet"});
    const int cb = run_cli({"train", "--config", cfg, "--seed", "7", "--out", b.string(), "--quiet"});
    int identical = 0;
    const char* files[] = {"curve.csv", "eval.csv", "checkpoint.json", "checkpoint.bin"};
    for (const char* f : files) {
      const std::string x = slurp(a / f);
      identical += !x.empty() && x == slurp(b / f);
    }
    pass = pass && ca == 0 && cb == 0 && identical == 4;
    detail += std::string(" ") + name + ": exit " + std::to_string(ca) + "/" + std::to_string(cb) + ", " +
              std::to_string(identical) + "/4 files identical;";
  }
  fs::remove_all(root);
  return {pass, "two seeded train runs per config," + detail};
}

// Multi-seed training shared by criteria 6 and 8.
class Runs {
 public:
  explicit Runs(fs::path out) : out_(std::move(out)) {}

  struct Summary {
    double mean = 0.0, se = 0.0;
    int episode = 0;
  };

  // Greedy success at the half-budget evaluation over the seeds.
  Summary half_budget(const std::string& name) {
    const auto& recs = train_all(name);
    const int episode = config(name).agent.episodes / 2;
    std::vector<double> rates;
    for (const auto& r : recs)
      for (const auto& e : r.eval)
        if (e.episode == episode) rates.push_back(e.greedy_success_rate);
    if (static_cast<int>(rates.size()) != kSeeds)
      throw std::runtime_error(name + ": no evaluation at episode " + std::to_string(episode));
    return {mean_of(rates), standard_error(rates), episode};
  }

  double slowest_run() const { return slowest_; }

  void write_aggregate() const {
    std::vector<RunRecord> all;
    for (const auto& [name, recs] : done_) all.insert(all.end(), recs.begin(), recs.end());
    fs::create_directories(out_);
    std::ofstream f(out_ / "aggregate.csv");
    write_aggregate_csv(f, aggregate_eval(all));
  }

 private:
  const std::vector<RunRecord>& train_all(const std::string& name) {
    if (auto it = done_.find(name); it != done_.end()) return it->second;
    const RunConfig c = config(name);
    std::vector<RunRecord> recs;
    for (int seed = 1; seed <= kSeeds; ++seed) {
      Stopwatch sw;
      TrainResult r = train(c.env, c.net, c.variant, c.agent, seed);
      slowest_ = std::max(slowest_, sw.seconds());
      const fs::path dir = out_ / (name + "_" + std::to_string(seed));
      fs::create_directories(dir);
      write_eval_csv(dir / "eval.csv", r.eval);
      write_curve_csv(dir / "curve.csv", r.curve);
      std::cerr << name << " seed " << seed << ": " << fmt("%.0f", sw.seconds()) << " s, final greedy "
                << (r.eval.empty() ? 0.0 : r.eval.back().greedy_success_rate) << "\n";
      recs.push_back({name, std::move(r.eval)});
    }
    return done_.emplace(name, std::move(recs)).first->second;
  }

  fs::path out_;
  std::map<std::string, std::vector<RunRecord>> done_;
  double slowest_ = 0.0;
};

std::string describe(const char* name, const Runs::Summary& s) {
  return std::string(name) + " " + fmt("%.3f", s.mean) + "+-" + fmt("%.3f", s.se);
}

Outcome sample_efficiency(Runs& runs) {
  bool pass = true;
  std::string detail;
  int episode = 0;
  for (const char* arch : {"fcn", "asr"}) {
    const std::string a = arch;
    const auto equi = runs.half_budget("equi_" + a), conv = runs.half_budget("conv_" + a),
               rad = runs.half_budget("rad_" + a);
    episode = equi.episode;
    const double tie = std::hypot(equi.se, rad.se);
    const bool ok = equi.mean - conv.mean >= 0.15 && equi.mean >= rad.mean - tie;
    pass = pass && ok;
    detail += " " + describe(("equi_" + a).c_str(), equi) + ", " + describe(("conv_" + a).c_str(), conv) +
              ", " + describe(("rad_" + a).c_str(), rad) + " (gap " + fmt("%.3f", equi.mean - conv.mean) +
              " needs>=0.15; equi>=rad-" + fmt("%.3f", tie) + ");";
  }
  pass = pass && runs.slowest_run() < 900.0;
  return {pass, std::to_string(kSeeds) + " seeds at episode " + std::to_string(episode) + ":" + detail +
                    " slowest run " + fmt("%.0f", runs.slowest_run()) + " s (limit 900 s)"};
}

Outcome ablation_parity(Runs& runs) {
  bool pass = true;
  std::string detail;
  Rng rng = derive_rng(18, 0);
  for (const char* arch : {"fcn", "asr"}) {
    const std::string dyn = std::string("equi_") + arch, lift = dyn + "_lift";
    for (const auto& name : {dyn, lift}) {
      const RunConfig c = config(name);
      const auto r = checks::network_equivariance(*random_net(c, 18), c.env, 50, rng);
      pass = pass && r.pass;
      detail += " " + name + " equivariance " + fmt("%.2e", r.max_error) + ";";
    }
    const auto d = runs.half_budget(dyn), l = runs.half_budget(lift);
    const double bound = 2.0 * std::hypot(d.se, l.se), diff = std::abs(d.mean - l.mean);
    pass = pass && diff <= bound;
    detail += " " + describe(dyn.c_str(), d) + " vs " + describe(lift.c_str(), l) + " |diff| " +
              fmt("%.3f", diff) + " (needs<=" + fmt("%.3f", bound) + ");";
  }
  return {pass, detail.substr(1)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"steerq acceptance battery"};
  std::vector<int> selected;
  std::string out = "acceptance_runs";
  app.add_option("criteria", selected, "criteria to run (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--out", out, "directory for training-run CSVs (criteria 6 and 8)");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  Runs runs{fs::path(out)};
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> battery{
      {1, {"kernel constraint", kernel_constraint}},
      {2, {"layer and network equivariance", equivariance}},
      {3, {"gradient correctness", gradients}},
      {4, {"rotation-invariant optimal Q on the tiny MDP", oracle}},
      {5, {"strict margin loss semantics", margin_semantics}},
      {6, {"sample-efficiency ordering", [&] { return sample_efficiency(runs); }}},
      {7, {"deictic permutation equivariance", deictic}},
      {8, {"dynamic filter / lift expansion parity", [&] { return ablation_parity(runs); }}},
      {9, {"seeded training determinism", determinism}},
  };

  int failures = 0;
  for (int id : selected) {
    const auto& [title, fn] = battery.at(id);
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << title << ": " << o.detail
              << std::endl;
  }
  if (std::find(selected.begin(), selected.end(), 6) != selected.end() ||
      std::find(selected.begin(), selected.end(), 8) != selected.end())
    runs.write_aggregate();
  return failures == 0 ? 0 : 1;
}
