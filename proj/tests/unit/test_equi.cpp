#include <doctest.h>

#include "helpers.hpp"
#include "steerq/equi.hpp"
#include "steerq/gradcheck.hpp"
#include "steerq/ops.hpp"

using namespace steerq;
using steerq::testing::max_abs_diff;
using steerq::testing::random_tensor;

namespace {

std::vector<std::pair<Representation, Representation>> rep_pairs(const Group& g) {
  std::vector<Representation> reps{Representation::trivial(g), Representation::regular(g)};
  if (!g.dihedral && g.rotations % 2 == 0) reps.push_back(Representation::quotient(g));
  std::vector<std::pair<Representation, Representation>> out;
  for (const auto& a : reps)
    for (const auto& b : reps) out.emplace_back(a, b);
  return out;
}

GeoTensor random_geo(const Representation& rep, int batch, int fields, int n, Rng& rng) {
  return make_geo(random_tensor({batch, fields * rep.dim(), n, n}, rng), rep);
}

double two_path(const std::function<GeoTensor(const GeoTensor&)>& f, const GeoTensor& x) {
  double worst = 0.0;
  for (const GroupElement& g : elements(x.rep.group)) {
    const GeoTensor lhs = f(act(g, x));
    const GeoTensor rhs = act(g, f(x));
    worst = std::max(worst, max_abs_diff(lhs.tensor.data(), rhs.tensor.data()));
  }
  return worst;
}

}  // namespace

TEST_CASE("trivial group expansion is the identity") {
  const Group c1 = Group::cyclic(1);
  KernelExpansion e(Representation::regular(c1), Representation::regular(c1), 2, 3, 3);
  CHECK(e.free_count() == e.expanded_count());
  for (int i = 0; i < e.expanded_count(); ++i) CHECK(e.index_map()[i] == i);
}

TEST_CASE("centered delta lifted to the regular representation") {
  const Group c4 = Group::cyclic(4);
  KernelExpansion e(Representation::trivial(c4), Representation::regular(c4), 1, 1, 3);
  REQUIRE(e.free_count() == 9);
  std::vector<double> base(9, 0.0);
  base[4] = 1.0;
  const Tensor k = e.expand(Tensor({9}, base));
  for (int slot = 0; slot < 4; ++slot)
    for (int p = 0; p < 9; ++p) CHECK(k.at(slot * 9 + p) == (p == 4 ? 1.0 : 0.0));
  CHECK(kernel_constraint_error(k, Representation::trivial(c4), Representation::regular(c4)) == 0.0);
}

TEST_CASE("regular to regular expansion copies base entries over orbits") {
  Rng rng(21);
  const Group c4 = Group::cyclic(4);
  const auto reg = Representation::regular(c4);
  KernelExpansion e(reg, reg, 2, 3, 3);
  CHECK(e.free_count() == 3 * 2 * 4 * 9);
  CHECK(e.expanded_count() == 4 * e.free_count());
  const Tensor base = random_tensor({e.free_count()}, rng);
  const Tensor k = e.expand(base);
  std::vector<double> sorted_base(base.data().begin(), base.data().end());
  std::sort(sorted_base.begin(), sorted_base.end());
  for (double v : k.data()) CHECK(std::binary_search(sorted_base.begin(), sorted_base.end(), v));
  // output slot 0 of each field is the base filter itself
  for (int fo = 0; fo < 3; ++fo)
    for (int j = 0; j < 8 * 9; ++j) CHECK(k.at((fo * 4) * 72 + j) == base.at(fo * 72 + j));
}

TEST_CASE("kernel constraint holds for every representation pair") {
  Rng rng(22);
  for (const Group grp : {Group::cyclic(2), Group::cyclic(4), Group::dihedral_group(4)}) {
    for (const auto& [in, out] : rep_pairs(grp)) {
      for (int k : {1, 3, 5}) {
        KernelExpansion e(in, out, 2, 2, k);
        const Tensor kernel = e.expand(random_tensor({e.free_count()}, rng));
        CHECK(kernel_constraint_error(kernel, in, out) < 1e-12);
      }
    }
  }
  KernelExpansion e(Representation::regular(Group::cyclic(4)), Representation::regular(Group::cyclic(4)), 1, 1, 3);
  Tensor kernel = e.expand(random_tensor({e.free_count()}, rng)).detach();
  kernel.mutable_data()[5] += 0.25;
  CHECK(kernel_constraint_error(kernel, e.in_rep(), e.out_rep()) >= 0.25 - 1e-12);
  CHECK_THROWS_AS(KernelExpansion(Representation::regular(Group::cyclic(8)),
                                  Representation::regular(Group::cyclic(8)), 1, 1, 3),
                  std::invalid_argument);
}

TEST_CASE("steerable convolution is equivariant, alone and stacked") {
  Rng rng(23);
  const Group c4 = Group::cyclic(4);
  const auto triv = Representation::trivial(c4), reg = Representation::regular(c4),
             quot = Representation::quotient(c4);
  SteerableConv l1(triv, reg, 1, 3, 3, true, rng);
  SteerableConv l2(reg, reg, 3, 2, 3, true, rng);
  SteerableConv l3(reg, quot, 2, 1, 1, true, rng);
  for (Tensor* b : {&l1.bias(), &l2.bias(), &l3.bias()})
    for (double& v : b->mutable_data()) v = uniform01(rng);
  const GeoTensor x = random_geo(triv, 2, 1, 8, rng);
  CHECK(two_path([&](const GeoTensor& t) { return l1.forward(t); }, x) < 1e-9);
  CHECK(two_path([&](const GeoTensor& t) {
          return l3.forward(relu(l2.forward(max_pool(relu(l1.forward(t))))));
        }, x) < 1e-9);

  const Group d4 = Group::dihedral_group(4);
  SteerableConv d1(Representation::trivial(d4), Representation::regular(d4), 1, 2, 3, true, rng);
  SteerableConv d2(Representation::regular(d4), Representation::trivial(d4), 2, 1, 3, true, rng);
  const GeoTensor xd = random_geo(Representation::trivial(d4), 1, 1, 7, rng);
  CHECK(two_path([&](const GeoTensor& t) { return d2.forward(relu(d1.forward(t))); }, xd) < 1e-9);
  CHECK_THROWS_AS(l2.forward(x), std::invalid_argument);
}

TEST_CASE("group pooling") {
  Rng rng(24);
  const Group c4 = Group::cyclic(4);
  const auto reg = Representation::regular(c4);
  const GeoTensor fib = make_geo(Tensor({1, 4, 1, 1}, std::vector<double>{1, 3, 2, 0}), reg);
  CHECK(group_pool(fib).tensor.item() == 3.0);
  const GeoTensor constant = make_geo(Tensor({1, 4, 1, 1}, 2.5), reg);
  CHECK(group_pool(constant).tensor.item() == 2.5);
  const GeoTensor x = random_geo(reg, 2, 3, 6, rng);
  for (const auto& g : elements(c4)) {
    CHECK(max_abs_diff(group_pool(act(g, x)).tensor.data(), act(g, group_pool(x)).tensor.data()) == 0.0);
  }
  CHECK_THROWS_AS(group_pool(make_geo(Tensor({1, 1, 2, 2}), Representation::trivial(c4))),
                  std::invalid_argument);
}

TEST_CASE("dynamic filters are equivariant whatever their weights") {
  Rng rng(25);
  const Group c4 = Group::cyclic(4);
  const auto reg = Representation::regular(c4);
  SteerableConv tmpl(reg, reg, 2, 2, 3, false, rng);
  const int f = tmpl.expansion().free_count();

  const GeoTensor x = random_geo(reg, 2, 2, 8, rng);
  const GeoTensor zero = tmpl.forward_dynamic(x, Tensor({2, f}, 0.0));
  for (double v : zero.tensor.data()) CHECK(v == 0.0);

  const Tensor w = random_tensor({2, f}, rng);
  const Tensor kernels = dynamic_filter(w, tmpl.expansion());
  CHECK(kernel_constraint_error(kernels, reg, reg) < 1e-12);
  CHECK(max_abs_diff(kernels.data().subspan(0, kernels.numel() / 2),
                     kernels.data().subspan(kernels.numel() / 2)) > 0.0);
  CHECK(two_path([&](const GeoTensor& t) { return tmpl.forward_dynamic(t, w); }, x) < 1e-9);
  CHECK_THROWS_AS(dynamic_filter(Tensor({2, f + 1}), tmpl.expansion()), std::invalid_argument);
}

TEST_CASE("lift expansion appends invariant fields") {
  Rng rng(26);
  const Group c4 = Group::cyclic(4);
  const auto reg = Representation::regular(c4);
  const GeoTensor x = random_geo(reg, 1, 2, 4, rng);
  CHECK(lift_expand(Tensor({1, 0}), x).tensor.numel() == x.tensor.numel());
  const GeoTensor y = lift_expand(Tensor({1}, 5.0), x);
  CHECK(y.fields() == 3);
  for (std::size_t i = x.tensor.numel(); i < y.tensor.numel(); ++i) CHECK(y.tensor.at(i) == 5.0);

  const Tensor vec = random_tensor({1, 2}, rng);
  SteerableConv after(reg, reg, 4, 1, 3, true, rng);
  CHECK(two_path([&](const GeoTensor& t) { return after.forward(lift_expand(vec, t)); }, x) < 1e-9);
}

TEST_CASE("deictic evaluation shifts cyclically") {
  Rng rng(27);
  const Group c4 = Group::cyclic(4);
  const Tensor k = random_tensor({1, 1, 3, 3}, rng);
  const Tensor lin = random_tensor({1, 25}, rng);
  auto net = [&](const Tensor& p) {
    return ops::linear(ops::reshape(ops::relu(ops::conv2d(p, k, 1, 1)), {p.dim(0), 25}), lin);
  };
  const Tensor patch = random_tensor({2, 1, 5, 5}, rng);
  const auto els = elements(c4);
  const Tensor base = deictic_eval(net, patch, els);
  for (const auto& g : els) {
    const Tensor moved = deictic_eval(net, act_spatial(g, patch), els);
    const auto perm = rho(Representation::regular(c4), g);
    double worst = 0.0;
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 4; ++i)
        worst = std::max(worst, std::abs(moved.at(b * 4 + perm.map(i)) - base.at(b * 4 + i)));
    CHECK(worst < 1e-9);
  }
  auto constant = [](const Tensor& p) { return Tensor({p.dim(0), 1}, 1.5); };
  const Tensor flat = deictic_eval(constant, patch, els);
  for (double v : flat.data()) CHECK(v == 1.5);
  const Tensor single = deictic_eval(net, patch, {GroupElement::identity(c4)});
  CHECK(max_abs_diff(single.data(), net(patch).data()) == 0.0);
}

TEST_CASE("gradients flow through the kernel expansion") {
  Rng rng(28);
  const Group c4 = Group::cyclic(4);
  SteerableConv l1(Representation::trivial(c4), Representation::regular(c4), 1, 2, 3, true, rng);
  SteerableConv l2(Representation::regular(c4), Representation::quotient(c4), 2, 1, 3, true, rng);
  const GeoTensor x = random_geo(Representation::trivial(c4), 2, 1, 6, rng);
  const Tensor w = random_tensor({1, 2 * 2 * 36}, rng);
  auto loss = [&] {
    const Tensor y = l2.forward(relu(l1.forward(x))).tensor;
    return ops::sum(ops::linear(ops::reshape(y, {1, static_cast<int>(y.numel())}), w));
  };
  const auto r = gradient_check(loss, {l1.weight(), l1.bias(), l2.weight(), l2.bias()}, 30, rng);
  CHECK(r.max_rel_error < 1e-5);
}
