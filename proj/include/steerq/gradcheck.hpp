#pragma once

#include <functional>
#include <vector>

#include "steerq/rng.hpp"
#include "steerq/tensor.hpp"

namespace steerq {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int probes = 0;
};

/// Compares reverse-mode gradients of `loss` (a scalar recomputed from the
/// current values of `params`) with central differences at `probes` entries
/// drawn uniformly over all parameter entries. Relative error per probe is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult gradient_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                               int probes, Rng& rng, double step = 1e-6, double floor = 1e-4);

}  // namespace steerq
