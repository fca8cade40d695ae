#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "steerq/gradcheck.hpp"
#include "steerq/ops.hpp"
#include "steerq/optim.hpp"

using namespace steerq;
using steerq::testing::random_tensor;

namespace {

// weighted sum so every output entry gets a distinct upstream gradient
Tensor probe_loss(const Tensor& y, const Tensor& weights) {
  return ops::sum(ops::reshape(ops::linear(ops::reshape(y, {1, static_cast<int>(y.numel())}),
                                           weights),
                               {1}));
}

Tensor weights_for(const Tensor& y, Rng& rng) {
  return random_tensor({1, static_cast<int>(y.numel())}, rng);
}

void check_grad(const std::function<Tensor()>& f, const std::vector<Tensor>& params, Rng& rng) {
  const auto r = gradient_check(f, params, 30, rng);
  CHECK(r.max_rel_error < 1e-5);
}

}  // namespace

TEST_CASE("conv2d identity and delta examples") {
  Rng rng(1);
  const Tensor x = random_tensor({2, 5, 5}, rng);
  Tensor id({2, 2, 1, 1}, std::vector<double>{1, 0, 0, 1});
  CHECK(ops::conv2d(x, id).data().size() == x.numel());
  CHECK(testing::max_abs_diff(ops::conv2d(x, id).data(), x.data()) == 0.0);

  Tensor delta({1, 5, 5}, 0.0);
  delta.mutable_data()[12] = 1.0;
  const Tensor y = ops::conv2d(delta, Tensor({1, 1, 3, 3}, 1.0), 1, 1);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c)
      CHECK(y.at(r * 5 + c) == ((r >= 1 && r <= 3 && c >= 1 && c <= 3) ? 1.0 : 0.0));
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({1, 3, 3, 3})), std::invalid_argument);
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({1, 2, 2, 2})), std::invalid_argument);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(2);
  for (int stride : {1, 2}) {
    Tensor x = random_tensor({2, 2, 5, 5}, rng, true);
    Tensor k = random_tensor({3, 2, 3, 3}, rng, true);
    const Tensor w = weights_for(ops::conv2d(x, k, stride, 1), rng);
    check_grad([&] { return probe_loss(ops::conv2d(x, k, stride, 1), w); }, {x, k}, rng);
  }
  Tensor x = random_tensor({2, 2, 4, 4}, rng, true);
  Tensor k = random_tensor({2, 3, 2, 3, 3}, rng, true);
  const Tensor w = weights_for(ops::conv2d(x, k, 1, 1), rng);
  check_grad([&] { return probe_loss(ops::conv2d(x, k, 1, 1), w); }, {x, k}, rng);
}

TEST_CASE("shape ops: forward examples") {
  Tensor v({3}, std::vector<double>{-1, 0, 2});
  const Tensor r = ops::relu(v);
  CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{0, 0, 2});

  const Tensor up = ops::upsample_nearest2d(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  const std::vector<double> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  CHECK(std::vector<double>(up.data().begin(), up.data().end()) == expect);

  const Tensor img({1, 1, 8, 8}, 1.0);
  const Tensor patch = ops::crop_patch(img, {Cell{0, 0}}, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(patch.at(r * 4 + c) == ((r < 2 || c < 2) ? 0.0 : 1.0));

  const Tensor pooled = ops::max_pool2d(Tensor({1, 2, 2}, std::vector<double>{1, 3, 2, 0}));
  CHECK(pooled.item() == 3.0);
  const Tensor fm = ops::fiber_max(Tensor({1, 4, 1, 1}, std::vector<double>{1, 3, 2, 0}), 4);
  CHECK(fm.item() == 3.0);
  CHECK_THROWS_AS(ops::concat({Tensor({1, 2, 3}), Tensor({2, 2, 3})}), std::invalid_argument);
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  Rng rng(3);
  Tensor x = random_tensor({2, 4, 4, 4}, rng, true);
  auto run = [&](const std::function<Tensor(const Tensor&)>& op) {
    const Tensor w = weights_for(op(x), rng);
    check_grad([&] { return probe_loss(op(x), w); }, {x}, rng);
  };
  SUBCASE("relu") { run([](const Tensor& t) { return ops::relu(t); }); }
  SUBCASE("max_pool2d") { run([](const Tensor& t) { return ops::max_pool2d(t); }); }
  SUBCASE("upsample") { run([](const Tensor& t) { return ops::upsample_nearest2d(t); }); }
  SUBCASE("crop") {
    run([](const Tensor& t) { return ops::crop_patch(t, {Cell{0, 1}, Cell{3, 3}}, 3); });
  }
  SUBCASE("fiber_max") { run([](const Tensor& t) { return ops::fiber_max(t, 2); }); }
  SUBCASE("spatial_mean") { run([](const Tensor& t) { return ops::spatial_mean(t); }); }
  SUBCASE("gather") {
    run([](const Tensor& t) { return ops::gather_last(t, {3, 0, 0, 2, 1}); });
  }
  SUBCASE("concat") {
    Tensor y = random_tensor({2, 1, 4, 4}, rng, true);
    const Tensor w = weights_for(ops::concat({x, y}), rng);
    check_grad([&] { return probe_loss(ops::concat({x, y}), w); }, {x, y}, rng);
  }
  SUBCASE("bias, add, scale") {
    Tensor b = random_tensor({4}, rng, true);
    auto f = [&] { return ops::scale(ops::add(ops::add_channel_bias(x, b), x), 0.7); };
    const Tensor w = weights_for(f(), rng);
    check_grad([&] { return probe_loss(f(), w); }, {x, b}, rng);
  }
  SUBCASE("linear") {
    Tensor in = random_tensor({3, 5}, rng, true);
    Tensor wt = random_tensor({4, 5}, rng, true);
    Tensor b = random_tensor({4}, rng, true);
    const Tensor w = weights_for(ops::linear(in, wt, b), rng);
    check_grad([&] { return probe_loss(ops::linear(in, wt, b), w); }, {in, wt, b}, rng);
  }
  SUBCASE("broadcast, select, where") {
    Tensor v = random_tensor({2, 3}, rng, true);
    Tensor u = random_tensor({2, 3}, rng, true);
    auto f = [&] {
      return ops::add(ops::mean(ops::broadcast_fields(v, 2, 3, 3)),
                      ops::sum(ops::select_rows(ops::where_rows({true, false}, v, u), {2, 0})));
    };
    check_grad(f, {v, u}, rng);
  }
  SUBCASE("losses") {
    Tensor p = random_tensor({4}, rng, true);
    Tensor q = random_tensor({3, 5}, rng, true);
    auto f = [&] {
      return ops::add(ops::huber_loss(p, {0.1, 2.5, -3.0, 0.2}, {1.0, 0.5, 2.0, 1.0}),
                      ops::add(ops::cross_entropy(q, {0, 4, 2}),
                               ops::strict_margin_loss(q, {1, 2, 3}, {true, false, true}, 0.1)));
    };
    check_grad(f, {p, q}, rng);
  }
}

TEST_CASE("huber, cross entropy and margin examples") {
  CHECK(ops::huber(0.5) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(ops::huber(2.0, 1.0) == doctest::Approx(1.5).epsilon(1e-15));
  const Tensor logits({2, 5}, 0.3);
  CHECK(ops::cross_entropy(logits, {0, 3}).item() == doctest::Approx(std::log(5.0)).epsilon(1e-14));

  const Tensor q({1, 3}, std::vector<double>{0.5, 0.3, 0.45});
  CHECK(ops::strict_margin_loss(q, {0}, {true}, 0.1).item() == doctest::Approx(0.05).epsilon(1e-12));
  const Tensor dominant({1, 3}, std::vector<double>{0.9, 0.3, 0.45});
  CHECK(ops::strict_margin_loss(dominant, {0}, {true}, 0.1).item() == 0.0);
  CHECK(ops::strict_margin_loss(q, {0}, {false}, 0.1).item() == 0.0);
}

TEST_CASE("autodiff bookkeeping") {
  Tensor a = Tensor::parameter({2}, {1.0, 2.0});
  const Tensor y = ops::sum(ops::add(a, a));
  y.backward();
  CHECK(a.grad()[0] == 2.0);
  {
    NoGradGuard guard;
    CHECK_FALSE(ops::sum(a).requires_grad());
  }
  CHECK_THROWS_AS(Tensor({2}).backward(), std::logic_error);
  CHECK_THROWS_AS(Tensor({2}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("adam examples") {
  Tensor p = Tensor::parameter({1}, {0.0});
  Adam opt({p}, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  p.mutable_grad()[0] = 1.0;
  opt.step();
  CHECK(p.at(0) == doctest::Approx(-0.1).epsilon(1e-6));

  Tensor z = Tensor::parameter({3}, {1.0, -2.0, 0.5});
  Adam still({z}, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  z.mutable_grad();
  still.step();
  CHECK(std::vector<double>(z.data().begin(), z.data().end()) == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(still.step_count() == 1);

  Tensor a = Tensor::parameter({2}, {0.3, 0.3});
  Adam twin({a}, AdamConfig{0.01, 0.9, 0.999, 1e-8, 1e-5});
  for (int i = 0; i < 5; ++i) {
    a.zero_grad();
    a.mutable_grad()[0] = a.mutable_grad()[1] = 0.7 - i;
    twin.step();
  }
  CHECK(a.at(0) == a.at(1));
}
