#include "steerq/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steerq {

ReplayBuffer::ReplayBuffer(std::size_t capacity, PerConfig per, bool protect_expert)
    : capacity_(capacity), per_(per), protect_(protect_expert) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  if (per.alpha < 0 || per.eps <= 0 || per.expert_bonus < 0) {
    throw std::invalid_argument("invalid prioritized replay parameters");
  }
}

void ReplayBuffer::add(Transition t) {
  const double p = max_priority_;
  add(std::move(t), p);
}

void ReplayBuffer::add(Transition t, double priority) {
  if (!(priority > 0)) throw std::invalid_argument("replay priority must be positive");
  max_priority_ = std::max(max_priority_, priority);
  ReplayEntry e{std::move(t), priority, false};
  e.expert = e.t.expert;
  if (protect_ && e.expert) {
    if (expert_.size() >= capacity_) throw std::length_error("expert data exceeds replay capacity");
    expert_.push_back(std::move(e));
    // the ring shrinks as the protected partition grows; drop its oldest
    while (size() > capacity_) {
      agent_.erase(agent_.begin() + static_cast<std::ptrdiff_t>(ring_next_ % agent_.size()));
      if (!agent_.empty()) ring_next_ %= agent_.size(); else ring_next_ = 0;
    }
    return;
  }
  const std::size_t room = capacity_ - expert_.size();
  if (agent_.size() < room) {
    agent_.push_back(std::move(e));
  } else {
    agent_[ring_next_] = std::move(e);
    ring_next_ = (ring_next_ + 1) % room;
  }
}

std::size_t ReplayBuffer::expert_count() const {
  std::size_t n = expert_.size();
  for (const auto& e : agent_) n += e.expert;
  return n;
}

const ReplayEntry& ReplayBuffer::at(std::size_t i) const {
  if (i < expert_.size()) return expert_[i];
  if (i - expert_.size() < agent_.size()) return agent_[i - expert_.size()];
  throw std::out_of_range("replay index");
}

ReplayEntry& ReplayBuffer::entry(std::size_t i) { return const_cast<ReplayEntry&>(at(i)); }

std::vector<double> ReplayBuffer::probabilities() const {
  std::vector<double> p(size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::pow(at(i).priority, per_.alpha);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

ReplayBuffer::Sample ReplayBuffer::sample(int batch, double beta, Rng& rng) const {
  if (size() == 0) throw std::logic_error("sampling from an empty replay buffer");
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  const std::vector<double> p = probabilities();
  std::vector<double> cumulative(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) cumulative[i] = (acc += p[i]);
  const double n = static_cast<double>(p.size());
  const double p_min = *std::min_element(p.begin(), p.end());
  const double max_weight = std::pow(n * p_min, -beta);
  Sample s;
  for (int k = 0; k < batch; ++k) {
    const double u = uniform01(rng) * acc;
    std::size_t i = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    i = std::min(i, p.size() - 1);
    s.indices.push_back(i);
    s.weights.push_back(std::pow(n * p[i], -beta) / max_weight);
  }
  return s;
}

void ReplayBuffer::update(const std::vector<std::size_t>& indices,
                          const std::vector<double>& td_errors) {
  if (indices.size() != td_errors.size()) throw std::invalid_argument("replay update size mismatch");
  for (std::size_t k = 0; k < indices.size(); ++k) {
    ReplayEntry& e = entry(indices[k]);
    e.priority = std::abs(td_errors[k]) + per_.eps + (e.expert ? per_.expert_bonus : 0.0);
    max_priority_ = std::max(max_priority_, e.priority);
  }
}

}  // namespace steerq
