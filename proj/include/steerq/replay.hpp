#pragma once

// Prioritized replay with an optional protected partition for expert data.

#include <cstddef>
#include <vector>

#include "steerq/env.hpp"
#include "steerq/rng.hpp"

namespace steerq {

struct ReplayEntry {
  Transition t;
  double priority = 1.0;
  bool expert = false;
};

struct PerConfig {
  double alpha = 0.6;
  double eps = 1e-6;
  double expert_bonus = 1.0;
};

class ReplayBuffer {
 public:
  /// With protect_expert, expert entries live in their own partition and
  /// are never evicted; agent entries use the remaining capacity as a ring.
  ReplayBuffer(std::size_t capacity, PerConfig per, bool protect_expert);

  /// New entries get the largest priority seen so far.
  void add(Transition t);
  /// Explicit priority (tests, restoring).
  void add(Transition t, double priority);

  std::size_t size() const { return expert_.size() + agent_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t expert_count() const;
  const ReplayEntry& at(std::size_t i) const;

  /// P(i) = p_i^alpha / sum_j p_j^alpha.
  std::vector<double> probabilities() const;

  struct Sample {
    std::vector<std::size_t> indices;
    std::vector<double> weights;  ///< (N P(i))^-beta over the largest possible weight
  };
  Sample sample(int batch, double beta, Rng& rng) const;
  /// priority = |td| + eps + expert_bonus * expert
  void update(const std::vector<std::size_t>& indices, const std::vector<double>& td_errors);

 private:
  ReplayEntry& entry(std::size_t i);

  std::size_t capacity_;
  PerConfig per_;
  bool protect_;
  std::vector<ReplayEntry> expert_;  // protected partition
  std::vector<ReplayEntry> agent_;   // ring
  std::size_t ring_next_ = 0;
  double max_priority_ = 1.0;
};

}  // namespace steerq
