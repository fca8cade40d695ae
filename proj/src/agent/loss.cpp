#include <cmath>
#include <stdexcept>

#include "steerq/agent.hpp"
#include "steerq/ops.hpp"

namespace steerq {

namespace {

NetInput input_of(const GridStack& env, const std::vector<Transition>& batch, bool next) {
  std::vector<Observation> obs;
  std::vector<bool> holding;
  for (const Transition& t : batch) {
    const GridState& s = next ? t.s_next : t.s;
    obs.push_back(env.observe(s));
    holding.push_back(s.holding);
  }
  return make_input(obs, holding);
}

// Bootstrapping stops only at the goal. Hitting the step limit is a
// truncation: the step counter is not part of the observation.
std::vector<double> continues(const GridStack& env, const std::vector<Transition>& batch) {
  std::vector<double> c;
  for (const Transition& t : batch) c.push_back(env.is_goal(t.s_next) ? 0.0 : 1.0);
  return c;
}

double row_value(const Tensor& q, int row, int col) {
  return q.at(static_cast<std::size_t>(row) * q.dim(1) + col);
}

LossTerms fcn_loss(const FcnQNet& online, const FcnQNet& target, const GridStack& env,
                   const std::vector<Transition>& batch, const std::vector<double>& weights,
                   const TrainConfig& cfg) {
  const int b = static_cast<int>(batch.size());
  std::vector<int> a_idx;
  std::vector<bool> expert;
  for (const Transition& t : batch) {
    a_idx.push_back(env.action_index(t.a));
    expert.push_back(t.expert);
  }
  const auto cont = continues(env, batch);
  std::vector<double> y(b);
  {
    NoGradGuard no_grad;
    const NetInput next = input_of(env, batch, true);
    const Tensor qt = target.q_values(next);
    const auto best = argmax_rows(cfg.double_dqn ? online.q_values(next) : qt);
    for (int r = 0; r < b; ++r) y[r] = batch[r].r + cfg.gamma * cont[r] * row_value(qt, r, best[r]);
  }
  const Tensor q = online.q_values(input_of(env, batch, false));
  const Tensor q_sa = ops::select_rows(q, a_idx);
  const Tensor td = ops::huber_loss(q_sa, y, weights, cfg.huber_delta);
  const Tensor margin = ops::strict_margin_loss(q, a_idx, expert, cfg.margin);
  LossTerms out;
  out.total = ops::add(td, ops::scale(margin, cfg.margin_weight));
  out.td = td.item();
  out.margin = margin.item();
  for (int r = 0; r < b; ++r) out.td_errors.push_back(q_sa.at(r) - y[r]);
  return out;
}

LossTerms asr_loss(const AsrQNet& online, const AsrQNet& target, const GridStack& env,
                   const std::vector<Transition>& batch, const std::vector<double>& weights,
                   const TrainConfig& cfg) {
  const EnvConfig& ec = env.config();
  const int b = static_cast<int>(batch.size()), w = ec.workspace, lo = ec.workspace_lo();
  std::vector<int> x_idx, theta;
  std::vector<Cell> cells;
  std::vector<bool> expert;
  for (const Transition& t : batch) {
    x_idx.push_back((t.a.x.row - lo) * w + (t.a.x.col - lo));
    theta.push_back(t.a.theta);
    cells.push_back(t.a.x);
    expert.push_back(t.expert);
  }
  const auto cont = continues(env, batch);
  std::vector<double> y(b);
  {
    NoGradGuard no_grad;
    const NetInput next = input_of(env, batch, true);
    const auto t1 = target.q1(next);
    std::vector<Cell> next_cells;
    std::vector<int> best_theta;
    if (cfg.double_dqn) {
      const auto o1 = online.q1(next);
      for (int i : argmax_rows(o1.values)) next_cells.push_back({lo + i / w, lo + i % w});
      best_theta = argmax_rows(online.q2(next, o1, next_cells).values);
    } else {
      for (int i : argmax_rows(t1.values)) next_cells.push_back({lo + i / w, lo + i % w});
    }
    const Tensor t2 = target.q2(next, t1, next_cells).values;
    if (!cfg.double_dqn) best_theta = argmax_rows(t2);
    for (int r = 0; r < b; ++r) {
      y[r] = batch[r].r + cfg.gamma * cont[r] * row_value(t2, r, best_theta[r]);
    }
  }
  const NetInput in = input_of(env, batch, false);
  const auto q1o = online.q1(in);
  const auto q2o = online.q2(in, q1o, cells);
  const Tensor q1_sa = ops::select_rows(q1o.values, x_idx);
  const Tensor q2_sa = ops::select_rows(q2o.values, theta);
  const Tensor td = ops::add(ops::huber_loss(q1_sa, y, weights, cfg.huber_delta),
                             ops::huber_loss(q2_sa, y, weights, cfg.huber_delta));
  Tensor margin = Tensor::scalar(0.0);
  if (cfg.margin_heads != MarginHeads::Q2) {
    margin = ops::add(margin, ops::strict_margin_loss(q1o.values, x_idx, expert, cfg.margin));
  }
  if (cfg.margin_heads != MarginHeads::Q1) {
    margin = ops::add(margin, ops::strict_margin_loss(q2o.values, theta, expert, cfg.margin));
  }
  LossTerms out;
  out.total = ops::add(td, ops::scale(margin, cfg.margin_weight));
  out.td = td.item();
  out.margin = margin.item();
  for (int r = 0; r < b; ++r) {
    out.td_errors.push_back(0.5 * (std::abs(q1_sa.at(r) - y[r]) + std::abs(q2_sa.at(r) - y[r])));
  }
  return out;
}

}  // namespace

LossTerms sdqfd_loss(const QNetwork& online, const QNetwork& target, const GridStack& env,
                     const std::vector<Transition>& batch, const std::vector<double>& weights,
                     const TrainConfig& config) {
  if (batch.empty()) throw std::invalid_argument("sdqfd_loss: empty batch");
  const std::vector<double> w = weights.empty() ? std::vector<double>(batch.size(), 1.0) : weights;
  if (w.size() != batch.size()) throw std::invalid_argument("sdqfd_loss: one weight per transition");
  if (const auto* f = dynamic_cast<const FcnQNet*>(&online)) {
    const auto* ft = dynamic_cast<const FcnQNet*>(&target);
    if (!ft) throw std::invalid_argument("sdqfd_loss: target architecture differs");
    return fcn_loss(*f, *ft, env, batch, w, config);
  }
  const auto* a = dynamic_cast<const AsrQNet*>(&online);
  const auto* at = dynamic_cast<const AsrQNet*>(&target);
  if (!a || !at) throw std::invalid_argument("sdqfd_loss: unsupported network pair");
  return asr_loss(*a, *at, env, batch, w, config);
}

Transition act(const GroupElement& g, const Transition& t, const EnvConfig& config) {
  Transition out = t;
  out.s = act(g, t.s, config);
  out.a = act(g, t.a, config);
  out.s_next = act(g, t.s_next, config);
  return out;
}

std::vector<Transition> rad_augment(const std::vector<Transition>& batch, const EnvConfig& config,
                                    Rng& rng) {
  const Group c4 = Group::cyclic(4);
  std::vector<Transition> out;
  out.reserve(batch.size());
  for (const Transition& t : batch) {
    out.push_back(act(GroupElement::rotation_by(c4, uniform_int(rng, 4)), t, config));
  }
  return out;
}

std::vector<Transition> augment_expert(const std::vector<Transition>& demos, int copies,
                                       const EnvConfig& config, Rng& rng) {
  if (copies < 0) throw std::invalid_argument("augment_expert: negative copy count");
  std::vector<Transition> out;
  for (const Transition& t : demos) {
    for (int k = 0; k < copies; ++k) {
      Transition c = act(GroupElement::rotation_by(Group::cyclic(4), uniform_int(rng, 4)), t, config);
      c.expert = true;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace steerq
