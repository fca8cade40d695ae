#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "steerq/agent.hpp"
#include "steerq/optim.hpp"

namespace steerq {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
}

NetInput input_of(const GridStack& env, const std::vector<GridState>& states) {
  std::vector<Observation> obs;
  std::vector<bool> holding;
  for (const GridState& s : states) {
    obs.push_back(env.observe(s));
    holding.push_back(s.holding);
  }
  return make_input(obs, holding);
}

}  // namespace

void TrainConfig::validate() const {
  require(episodes >= 0, "episodes must be >= 0");
  require(pretrain_steps >= 0, "pretrain_steps must be >= 0");
  require(expert_steps >= 1, "expert_steps must be >= 1");
  require(expert_augment >= 0, "expert_augment must be >= 0");
  require(batch >= 1, "batch must be >= 1");
  require(gamma >= 0 && gamma < 1, "gamma must lie in [0,1)");
  require(lr > 0, "lr must be positive");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(huber_delta > 0, "huber_delta must be positive");
  require(margin >= 0 && margin_weight >= 0, "margin terms must be >= 0");
  require(capacity >= 1, "capacity must be >= 1");
  require(per.alpha >= 0 && per.eps > 0 && per.expert_bonus >= 0, "invalid per settings");
  require(per_beta0 >= 0 && per_beta0 <= 1, "per_beta0 must lie in [0,1]");
  require(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1,
          "epsilon values must lie in [0,1]");
  require(epsilon_fraction > 0 && epsilon_fraction <= 1, "epsilon_fraction must lie in (0,1]");
  require(grad_steps_per_env_step >= 0, "grad_steps_per_env_step must be >= 0");
  require(target_sync >= 1, "target_sync must be >= 1");
  require(eval_interval >= 0, "eval_interval must be >= 0");
  require(eval_episodes >= 1, "eval_episodes must be >= 1");
}

std::vector<SpatialAction> select_actions(const QNetwork& net, const GridStack& env,
                                          const std::vector<GridState>& states, double epsilon,
                                          Rng& rng) {
  const NetInput in = input_of(env, states);
  if (const auto* f = dynamic_cast<const FcnQNet*>(&net)) return fcn_select(*f, in, env, epsilon, rng);
  if (const auto* a = dynamic_cast<const AsrQNet*>(&net)) {
    return asr_select(*a, in, env.config(), epsilon, rng);
  }
  throw std::invalid_argument("select_actions: unsupported network");
}

double greedy_success_rate(const QNetwork& net, const GridStack& env, int episodes,
                           std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("greedy_success_rate: no episodes");
  // all episodes advance together as one batch; greedy rows do not interact
  std::vector<GridState> states;
  for (int i = 0; i < episodes; ++i) states.push_back(env.reset(seed + static_cast<std::uint64_t>(i)));
  std::vector<int> active(episodes);
  for (int i = 0; i < episodes; ++i) active[i] = i;
  int successes = 0;
  Rng unused(0);
  while (!active.empty()) {
    std::vector<GridState> batch;
    for (int i : active) batch.push_back(states[i]);
    const auto actions = select_actions(net, env, batch, 0.0, unused);
    std::vector<int> still;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Transition t = env.step(batch[k], actions[k]);
      states[active[k]] = t.s_next;
      if (t.r > 0) ++successes;
      if (!t.done) still.push_back(active[k]);
    }
    active = std::move(still);
  }
  return static_cast<double>(successes) / episodes;
}

std::vector<Transition> collect_expert(const GridStack& env, int steps, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0x657870);
  std::vector<Transition> out;
  while (static_cast<int>(out.size()) < steps) {
    GridState s = env.reset(rng());
    for (bool done = false; !done && static_cast<int>(out.size()) < steps;) {
      Transition t = env.step(s, env.expert_action(s));
      t.expert = true;
      s = t.s_next;
      done = t.done;
      out.push_back(std::move(t));
    }
  }
  return out;
}

TrainResult train(const EnvConfig& env_config, const NetConfig& net_config, Variant variant,
                  const TrainConfig& cfg, std::uint64_t seed, const CurveCallback& on_episode) {
  env_config.validate();
  cfg.validate();
  const GridStack env(env_config);
  const NetConfig nc = variant_net_config(variant, net_config);
  const bool augment = variant_augments(variant);

  Rng init_rng = derive_rng(seed, 1);
  Rng explore_rng = derive_rng(seed, 2);
  Rng sample_rng = derive_rng(seed, 3);
  Rng demo_rng = derive_rng(seed, 4);
  Rng rad_rng = derive_rng(seed, 5);
  Rng env_rng = derive_rng(seed, 6);

  TrainResult result;
  result.net = make_network(nc, env_config, init_rng);
  const std::unique_ptr<QNetwork> target = make_network(nc, env_config, init_rng);
  copy_parameters(*result.net, *target);
  Adam optimizer(result.net->parameters(),
                 AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  ReplayBuffer replay(static_cast<std::size_t>(cfg.capacity), cfg.per, cfg.protect_expert);
  const auto demos = collect_expert(env, cfg.expert_steps, seed);
  for (const Transition& t : demos) replay.add(t);
  for (Transition& t : augment_expert(demos, cfg.expert_augment, env_config, demo_rng)) {
    replay.add(std::move(t));
  }

  auto grad_step = [&](double beta) {
    const auto sample = replay.sample(cfg.batch, beta, sample_rng);
    std::vector<Transition> batch;
    for (std::size_t i : sample.indices) batch.push_back(replay.at(i).t);
    if (augment) batch = rad_augment(batch, env_config, rad_rng);
    const LossTerms loss = sdqfd_loss(*result.net, *target, env, batch, sample.weights, cfg);
    const double value = loss.total.item();
    if (!std::isfinite(value)) {
      throw TrainingDiverged("non-finite loss at gradient step " +
                             std::to_string(result.grad_steps + 1));
    }
    optimizer.zero_grad();
    loss.total.backward();
    optimizer.step();
    replay.update(sample.indices, loss.td_errors);
    if (++result.grad_steps % cfg.target_sync == 0) copy_parameters(*result.net, *target);
    return value;
  };

  auto evaluate = [&](int episode) {
    result.eval.push_back(
        {episode, greedy_success_rate(*result.net, env, cfg.eval_episodes, cfg.eval_seed)});
  };

  double pretrain_loss = 0.0;
  for (int k = 0; k < cfg.pretrain_steps; ++k) pretrain_loss += grad_step(cfg.per_beta0);
  if (cfg.pretrain_steps > 0) pretrain_loss /= cfg.pretrain_steps;
  result.curve.push_back({0, 0, 0.0, 0, pretrain_loss, cfg.epsilon_start});
  if (on_episode) on_episode(result.curve.back());
  if (cfg.eval_interval > 0) evaluate(0);

  long env_steps = 0;
  const double decay_episodes = std::max(1.0, cfg.epsilon_fraction * cfg.episodes);
  for (int episode = 1; episode <= cfg.episodes; ++episode) {
    const double progress = static_cast<double>(episode - 1);
    const double epsilon = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) *
                                                   std::min(1.0, progress / decay_episodes);
    const double beta =
        cfg.per_beta0 + (1.0 - cfg.per_beta0) * std::min(1.0, progress / std::max(1, cfg.episodes - 1));
    GridState s = env.reset(env_rng());
    CurveRow row{episode, 0, 0.0, 0, 0.0, epsilon};
    int losses = 0;
    for (bool done = false; !done;) {
      const SpatialAction a = select_actions(*result.net, env, {s}, epsilon, explore_rng)[0];
      Transition t = env.step(s, a);
      ++env_steps;
      row.reward += t.r;
      if (t.r > 0) row.success = 1;
      done = t.done;
      s = t.s_next;
      replay.add(std::move(t));
      for (int k = 0; k < cfg.grad_steps_per_env_step; ++k) {
        row.loss += grad_step(beta);
        ++losses;
      }
    }
    if (losses > 0) row.loss /= losses;
    row.env_steps = env_steps;
    result.curve.push_back(row);
    if (on_episode) on_episode(row);
    if (cfg.eval_interval > 0 && episode % cfg.eval_interval == 0) evaluate(episode);
  }
  return result;
}

}  // namespace steerq
