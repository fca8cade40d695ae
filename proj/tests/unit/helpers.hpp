#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "steerq/rng.hpp"
#include "steerq/spatial.hpp"
#include "steerq/tensor.hpp"

namespace steerq::testing {

inline std::vector<double> random_values(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * (2.0 * uniform01(rng) - 1.0);
  return v;
}

inline Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  const std::size_t n = shape_numel(shape);
  Tensor t(std::move(shape), random_values(n, rng));
  t.set_requires_grad(grad);
  return t;
}

inline Image random_image(int n, Rng& rng) {
  Image img(n, n);
  for (double& v : img.values()) v = static_cast<double>(uniform_int(rng, 1000));
  return img;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace steerq::testing
