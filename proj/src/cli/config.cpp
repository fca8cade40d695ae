#include "steerq/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace steerq {

namespace {

using nlohmann::json;

// Reads typed keys from one JSON object and remembers which were consumed.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  void get(const char* key, int& dst) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    dst = v.get<int>();
  }
  void get(const char* key, std::uint64_t& dst) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) fail(key, "a non-negative integer");
    dst = v.get<std::uint64_t>();
  }
  void get(const char* key, double& dst) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_number()) fail(key, "a number");
    dst = v.get<double>();
  }
  void get(const char* key, bool& dst) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(key, "true or false");
    dst = v.get<bool>();
  }
  void get(const char* key, std::string& dst) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_string()) fail(key, "a string");
    dst = v.get<std::string>();
  }
  void get(const char* key, std::vector<int>& dst) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_array()) fail(key, "an array of integers");
    dst.clear();
    for (const json& e : v) {
      if (!e.is_number_integer()) fail(key, "an array of integers");
      dst.push_back(e.get<int>());
    }
  }
  template <class T, class Parse>
  void get_enum(const char* key, T& dst, Parse parse) {
    std::string s;
    get(key, s);
    if (!has(key)) return;
    try {
      dst = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown key " + where(key.c_str()));
    }
  }

  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw ConfigError(where(key) + " must be " + expected);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void validate_net(const NetConfig& n) {
  check(n.u == 4, "net.u must be 4 (only lattice-exact quarter-turn groups are built)");
  check(n.widths.size() == 3, "net.widths must list three UNet widths");
  for (int w : n.widths) check(w > 0 && w % n.u == 0, "net.widths entries must be positive multiples of u");
  check(n.q2_width > 0 && n.q2_width % n.u == 0, "net.q2_width must be a positive multiple of u");
  check(n.crop >= 3 && n.crop % 2 == 1, "net.crop must be odd and at least 3");
  check(n.hand_features >= 1, "net.hand_features must be positive");
  check(n.conv_scale >= 0, "net.conv_scale must be >= 0");
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Block top(j, "");
  if (top.has("seed")) {
    std::uint64_t s = 0;
    top.get("seed", s);
    c.seed = s;
  }
  top.get("out", c.out);

  if (top.has("env")) {
    Block b(top.raw("env"), "env");
    b.get("grid_size", c.env.grid_size);
    b.get("workspace", c.env.workspace);
    b.get("dominoes", c.env.dominoes);
    b.get("height_limit", c.env.height_limit);
    b.get("step_limit", c.env.step_limit);
    b.get("hand_patch", c.env.hand_patch);
    b.finish();
  }
  if (top.has("net")) {
    Block b(top.raw("net"), "net");
    b.get_enum("variant", c.variant, parse_variant);
    b.get("widths", c.net.widths);
    b.get("q2_width", c.net.q2_width);
    b.get("u", c.net.u);
    b.get_enum("mechanism", c.net.mechanism, parse_mechanism);
    b.get("crop", c.net.crop);
    b.get("hand_features", c.net.hand_features);
    b.get("conv_scale", c.net.conv_scale);
    b.finish();
  }
  if (top.has("agent")) {
    Block b(top.raw("agent"), "agent");
    TrainConfig& a = c.agent;
    b.get("episodes", a.episodes);
    b.get("pretrain_steps", a.pretrain_steps);
    b.get("expert_steps", a.expert_steps);
    b.get("expert_augment", a.expert_augment);
    b.get("batch", a.batch);
    b.get("gamma", a.gamma);
    b.get("lr", a.lr);
    b.get("weight_decay", a.weight_decay);
    b.get("huber_delta", a.huber_delta);
    b.get("margin", a.margin);
    b.get("margin_weight", a.margin_weight);
    b.get_enum("margin_heads", a.margin_heads, parse_margin_heads);
    b.get("capacity", a.capacity);
    b.get("per_alpha", a.per.alpha);
    b.get("per_eps", a.per.eps);
    b.get("per_expert_bonus", a.per.expert_bonus);
    b.get("per_beta0", a.per_beta0);
    b.get("protect_expert", a.protect_expert);
    b.get("epsilon_start", a.epsilon_start);
    b.get("epsilon_end", a.epsilon_end);
    b.get("epsilon_fraction", a.epsilon_fraction);
    b.get("grad_steps_per_env_step", a.grad_steps_per_env_step);
    b.get("target_sync", a.target_sync);
    b.get("eval_interval", a.eval_interval);
    b.get("eval_episodes", a.eval_episodes);
    b.get("eval_seed", a.eval_seed);
    b.get("double_dqn", a.double_dqn);
    b.finish();
  }
  if (top.has("oracle")) {
    Block b(top.raw("oracle"), "oracle");
    b.get("gamma", c.oracle.gamma);
    b.get("tol", c.oracle.tol);
    b.get("state_cap", c.oracle.state_cap);
    b.finish();
  }
  if (top.has("verify")) {
    Block b(top.raw("verify"), "verify");
    b.get("inputs", c.verify.inputs);
    b.get("kernel_draws", c.verify.kernel_draws);
    b.get("grad_probes", c.verify.grad_probes);
    b.get("env_samples", c.verify.env_samples);
    b.finish();
  }
  top.finish();

  try {
    c.env.validate();
    c.agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  validate_net(c.net);
  check(c.oracle.gamma >= 0 && c.oracle.gamma < 1, "oracle.gamma must lie in [0,1)");
  check(c.oracle.tol > 0, "oracle.tol must be positive");
  check(c.oracle.state_cap >= 1, "oracle.state_cap must be positive");
  check(c.verify.inputs >= 1 && c.verify.kernel_draws >= 1 && c.verify.grad_probes >= 1 &&
            c.verify.env_samples >= 1,
        "verify counts must be positive");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
  const TrainConfig& a = c.agent;
  json j;
  if (c.seed) j["seed"] = *c.seed;
  j["out"] = c.out;
  j["env"] = {{"grid_size", c.env.grid_size},       {"workspace", c.env.workspace},
              {"dominoes", c.env.dominoes},         {"height_limit", c.env.height_limit},
              {"step_limit", c.env.step_limit},     {"hand_patch", c.env.hand_patch}};
  j["net"] = {{"variant", to_string(c.variant)},
              {"widths", c.net.widths},
              {"q2_width", c.net.q2_width},
              {"u", c.net.u},
              {"mechanism", to_string(c.net.mechanism)},
              {"crop", c.net.crop},
              {"hand_features", c.net.hand_features},
              {"conv_scale", c.net.conv_scale}};
  j["agent"] = {{"episodes", a.episodes},
                {"pretrain_steps", a.pretrain_steps},
                {"expert_steps", a.expert_steps},
                {"expert_augment", a.expert_augment},
                {"batch", a.batch},
                {"gamma", a.gamma},
                {"lr", a.lr},
                {"weight_decay", a.weight_decay},
                {"huber_delta", a.huber_delta},
                {"margin", a.margin},
                {"margin_weight", a.margin_weight},
                {"margin_heads", to_string(a.margin_heads)},
                {"capacity", a.capacity},
                {"per_alpha", a.per.alpha},
                {"per_eps", a.per.eps},
                {"per_expert_bonus", a.per.expert_bonus},
                {"per_beta0", a.per_beta0},
                {"protect_expert", a.protect_expert},
                {"epsilon_start", a.epsilon_start},
                {"epsilon_end", a.epsilon_end},
                {"epsilon_fraction", a.epsilon_fraction},
                {"grad_steps_per_env_step", a.grad_steps_per_env_step},
                {"target_sync", a.target_sync},
                {"eval_interval", a.eval_interval},
                {"eval_episodes", a.eval_episodes},
                {"eval_seed", a.eval_seed},
                {"double_dqn", a.double_dqn}};
  j["oracle"] = {{"gamma", c.oracle.gamma}, {"tol", c.oracle.tol}, {"state_cap", c.oracle.state_cap}};
  j["verify"] = {{"inputs", c.verify.inputs},
                 {"kernel_draws", c.verify.kernel_draws},
                 {"grad_probes", c.verify.grad_probes},
                 {"env_samples", c.verify.env_samples}};
  return j;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig& c) {
  if (flag) return *flag;
  if (const char* env = std::getenv("STEERQ_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || env[0] == '-') throw ConfigError("STEERQ_SEED must be a non-negative integer");
    return v;
  }
  return c.seed.value_or(0);
}

}  // namespace steerq
