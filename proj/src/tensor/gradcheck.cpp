#include "steerq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steerq {

GradCheckResult gradient_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                               int probes, Rng& rng, double step, double floor) {
  std::size_t total = 0;
  for (const Tensor& p : params) total += p.numel();
  if (total == 0 || probes < 1) throw std::invalid_argument("gradient_check: nothing to probe");

  for (Tensor& p : params) p.zero_grad();
  const Tensor l = loss();
  l.backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckResult result;
  NoGradGuard no_grad;
  for (int n = 0; n < probes; ++n) {
    std::size_t flat = uniform_index(rng, total);
    std::size_t which = 0;
    while (flat >= params[which].numel()) flat -= params[which++].numel();
    double& v = params[which].mutable_data()[flat];
    const double saved = v;
    v = saved + step;
    const double up = loss().item();
    v = saved - step;
    const double down = loss().item();
    v = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[which][flat];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
    ++result.probes;
  }
  return result;
}

}  // namespace steerq
