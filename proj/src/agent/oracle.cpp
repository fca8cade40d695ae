#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "steerq/agent.hpp"

namespace steerq {

OracleResult value_iteration(const SmallMdp& mdp, double gamma, double tol, int max_iterations) {
  if (gamma < 0 || gamma >= 1) throw std::invalid_argument("value_iteration: gamma outside [0,1)");
  const std::size_t n = mdp.states.size();
  const int na = mdp.actions;
  OracleResult r;
  r.q.assign(n * na, 0.0);
  std::vector<double> v(n, 0.0), q(n * na);
  while (r.iterations < max_iterations) {
    for (std::size_t s = 0; s < n; ++s)
      v[s] = *std::max_element(r.q.begin() + s * na, r.q.begin() + (s + 1) * na);
    double change = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i] = mdp.reward[i] + gamma * v[mdp.next[i]];
      change = std::max(change, std::abs(q[i] - r.q[i]));
    }
    r.q.swap(q);
    ++r.iterations;
    r.residual = change;
    if (change < tol) return r;
  }
  throw std::runtime_error("value_iteration: no convergence after " +
                           std::to_string(max_iterations) + " iterations");
}

double oracle_invariance_error(const SmallMdp& mdp, const std::vector<double>& q) {
  const GridStack env(mdp.config);
  const Group c4 = Group::cyclic(4);
  double worst = 0.0;
  for (std::size_t s = 0; s < mdp.states.size(); ++s) {
    for (int k = 1; k < 4; ++k) {
      const GroupElement g = GroupElement::rotation_by(c4, k);
      const int gs = mdp.index_of(act(g, mdp.states[s], mdp.config));
      if (gs < 0) throw std::logic_error("rotated state is not in the enumerated MDP");
      for (int a = 0; a < mdp.actions; ++a) {
        const SpatialAction ga = act(g, env.action_at(a, mdp.states[s].holding), mdp.config);
        const double diff = std::abs(q[s * mdp.actions + a] -
                                     q[static_cast<std::size_t>(gs) * mdp.actions +
                                       env.action_index(ga)]);
        worst = std::max(worst, diff);
      }
    }
  }
  return worst;
}

}  // namespace steerq
