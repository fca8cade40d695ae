#pragma once

// SDQfD training: demonstrations plus online experience in prioritized
// replay, a TD term with a target network and a strict large-margin term on
// expert transitions.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "steerq/checkpoint.hpp"
#include "steerq/env.hpp"
#include "steerq/nets.hpp"
#include "steerq/replay.hpp"

namespace steerq {

enum class Variant { EquiFcn, EquiAsr, ConvFcn, ConvAsr, RadFcn, RadAsr };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::vector<Variant> all_variants();

/// Architecture and equivariance flag of the variant applied to `base`.
NetConfig variant_net_config(Variant v, NetConfig base);
/// rad_* variants rotate every sampled transition by a random quarter turn.
bool variant_augments(Variant v);

enum class MarginHeads { Both, Q1, Q2 };
std::string to_string(MarginHeads m);
MarginHeads parse_margin_heads(const std::string& s);

struct TrainConfig {
  int episodes = 1000;
  int pretrain_steps = 500;
  int expert_steps = 50;
  /// Random quarter-turn copies added per demonstration transition.
  int expert_augment = 9;
  int batch = 16;
  double gamma = 0.95;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double huber_delta = 1.0;
  double margin = 0.1;
  double margin_weight = 0.1;
  MarginHeads margin_heads = MarginHeads::Both;
  int capacity = 20000;
  PerConfig per;
  double per_beta0 = 0.4;
  bool protect_expert = true;
  double epsilon_start = 0.5;
  double epsilon_end = 0.01;
  /// Fraction of the episode budget over which epsilon decays linearly.
  double epsilon_fraction = 0.5;
  int grad_steps_per_env_step = 1;
  /// Gradient steps between target-network copies.
  int target_sync = 100;
  /// Evaluate the greedy policy every this many episodes (and after pretraining).
  int eval_interval = 100;
  int eval_episodes = 50;
  std::uint64_t eval_seed = 1'000'000;
  bool double_dqn = false;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct CurveRow {
  int episode = 0;
  long env_steps = 0;
  double reward = 0.0;
  int success = 0;
  double loss = 0.0;
  double epsilon = 0.0;
};

struct EvalRow {
  int episode = 0;
  double greedy_success_rate = 0.0;
};

struct LossTerms {
  Tensor total;
  double td = 0.0;
  double margin = 0.0;
  std::vector<double> td_errors;  ///< per batch row, used as new priorities
};

/// SDQfD loss on a batch. `weights` are importance weights (empty = 1).
LossTerms sdqfd_loss(const QNetwork& online, const QNetwork& target, const GridStack& env,
                     const std::vector<Transition>& batch, const std::vector<double>& weights,
                     const TrainConfig& config);

Transition act(const GroupElement& g, const Transition& t, const EnvConfig& config);
/// Each transition rotated by an independent uniform element of C4.
std::vector<Transition> rad_augment(const std::vector<Transition>& batch, const EnvConfig& config,
                                    Rng& rng);
/// Expert rollouts from fresh resets until `steps` transitions are collected.
std::vector<Transition> collect_expert(const GridStack& env, int steps, std::uint64_t seed);
/// `copies` rotated duplicates of every transition (originals not included).
std::vector<Transition> augment_expert(const std::vector<Transition>& demos, int copies,
                                       const EnvConfig& config, Rng& rng);

/// Epsilon-greedy actions for a batch of states, dispatching on the net type.
std::vector<SpatialAction> select_actions(const QNetwork& net, const GridStack& env,
                                          const std::vector<GridState>& states, double epsilon,
                                          Rng& rng);
/// Fraction of episodes from fixed reset seeds seed, seed+1, ... that reach
/// the goal under the greedy policy.
double greedy_success_rate(const QNetwork& net, const GridStack& env, int episodes,
                           std::uint64_t seed);

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  std::vector<CurveRow> curve;  ///< row 0 is the demo-pretraining record
  std::vector<EvalRow> eval;
  std::unique_ptr<QNetwork> net;
  long grad_steps = 0;
};

using CurveCallback = std::function<void(const CurveRow&)>;

/// Throws TrainingDiverged when a loss becomes non-finite.
TrainResult train(const EnvConfig& env_config, const NetConfig& net_config, Variant variant,
                  const TrainConfig& config, std::uint64_t seed,
                  const CurveCallback& on_episode = {});

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurveRow>& rows);
void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows);
std::vector<CurveRow> read_curve_csv(const std::filesystem::path& path);
std::vector<EvalRow> read_eval_csv(const std::filesystem::path& path);

Checkpoint network_checkpoint(const QNetwork& net, nlohmann::json metadata);
/// Copies stored values into `net`; throws on missing names or shape mismatch.
void load_network(const Checkpoint& ckpt, QNetwork& net);

// Tabular oracle on an exhaustively enumerated MDP.

struct OracleResult {
  std::vector<double> q;  ///< [state * actions + action]
  int iterations = 0;
  double residual = 0.0;
};

/// Synchronous value iteration until the sup-norm change is below `tol`.
OracleResult value_iteration(const SmallMdp& mdp, double gamma, double tol = 1e-10,
                             int max_iterations = 100000);
/// max over states, actions and rotations g of |Q(s,a) - Q(gs,ga)|.
double oracle_invariance_error(const SmallMdp& mdp, const std::vector<double>& q);

}  // namespace steerq
