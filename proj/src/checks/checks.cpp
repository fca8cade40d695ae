#include "steerq/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "steerq/equi.hpp"
#include "steerq/gradcheck.hpp"
#include "steerq/ops.hpp"

namespace steerq::checks {

namespace {

constexpr double kEquivarianceTol = 1e-9;
constexpr double kGradientTol = 1e-5;

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(grad);
  return t;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

CheckResult finish(std::string name, double err, double tol, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.max_error = err;
  r.tolerance = tol;
  r.pass = err < tol;
  r.detail = std::move(detail);
  return r;
}

std::vector<Representation> reps_of(const Group& g) {
  std::vector<Representation> reps{Representation::trivial(g), Representation::regular(g)};
  if (!g.dihedral && g.rotations % 2 == 0) reps.push_back(Representation::quotient(g));
  return reps;
}

// sum of w * y so every output entry receives its own upstream gradient
Tensor probe_loss(const Tensor& y, const Tensor& w) {
  return ops::sum(ops::linear(ops::reshape(y, {1, static_cast<int>(y.numel())}), w));
}

// Two off-center workspace cells for the orientation head.
std::vector<Cell> probe_cells(const EnvConfig& env) {
  const int lo = env.workspace_lo(), hi = env.workspace_hi();
  return {{lo + 1, hi - 1}, {hi, lo + env.workspace / 3}};
}

}  // namespace

nlohmann::json to_json(const CheckResult& r) {
  nlohmann::json j{{"check_name", r.name},
                   {"max_error", r.max_error},
                   {"tolerance", r.tolerance},
                   {"pass", r.pass}};
  if (r.expected_fail) j["expected_fail"] = true;
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j;
}

nlohmann::json to_json(const std::vector<CheckResult>& rs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rs) arr.push_back(to_json(r));
  return arr;
}

bool all_pass(const std::vector<CheckResult>& rs) {
  return std::all_of(rs.begin(), rs.end(),
                     [](const CheckResult& r) { return r.pass || r.expected_fail; });
}

CheckResult kernel_constraint(int draws, Rng& rng, bool corrupt) {
  double worst = 0.0;
  int kernels = 0;
  for (const Group grp : {Group::cyclic(4), Group::dihedral_group(4)}) {
    for (const auto& in : reps_of(grp)) {
      for (const auto& out : reps_of(grp)) {
        for (int k : {1, 3, 5}) {
          const KernelExpansion e(in, out, 2, 2, k);
          for (int d = 0; d < draws; ++d) {
            Tensor kernel = e.expand(random_tensor({e.free_count()}, rng)).detach();
            // one entry only: shifting a whole orbit would keep the kernel valid
            if (corrupt) kernel.mutable_data()[kernel.numel() / 2 + 1] += 0.5;
            worst = std::max(worst, kernel_constraint_error(kernel, in, out));
            ++kernels;
          }
        }
      }
    }
  }
  return finish("kernel_constraint", worst, 1e-12,
                std::to_string(kernels) + " kernels over C4, C4/C2 and D4, k in {1,3,5}" +
                    (corrupt ? ", corrupted" : ""));
}

CheckResult layer_equivariance(Group g, int inputs, Rng& rng) {
  double worst = 0.0;
  for (const auto& in : reps_of(g)) {
    for (const auto& out : reps_of(g)) {
      const SteerableConv conv(in, out, 2, 2, 3, true, rng);
      for (int i = 0; i < inputs; ++i) {
        const GeoTensor x = make_geo(random_tensor({1, 2 * in.dim(), 8, 8}, rng), in);
        NoGradGuard ng;
        const GeoTensor base = conv.forward(x);
        for (const auto& e : elements(g)) {
          worst = std::max(worst, max_abs_diff(conv.forward(act(e, x)).tensor.data(),
                                               act(e, base).tensor.data()));
        }
      }
    }
  }
  return finish("layer_equivariance_" + g.name(), worst, kEquivarianceTol);
}

CheckResult network_equivariance(const QNetwork& net, const EnvConfig& env, int inputs, Rng& rng) {
  const Group c4 = Group::cyclic(4);
  const auto quot = Representation::quotient(c4);
  const int n = env.grid_size, p = env.hand_patch;
  double worst = 0.0;
  NoGradGuard ng;
  for (int i = 0; i < inputs; ++i) {
    NetInput in;
    in.image = random_tensor({2, 1, n, n}, rng);
    in.hand = random_tensor({2, 1, p, p}, rng);
    in.holding = {false, true};
    for (const auto& g : elements(c4)) {
      NetInput moved{act_spatial(g, in.image), in.hand, in.holding};
      if (const auto* f = dynamic_cast<const FcnQNet*>(&net)) {
        const QMaps base = f->forward(in), gm = f->forward(moved);
        worst = std::max(worst, max_abs_diff(gm.pick.tensor.data(),
                                             act(g, GeoTensor{base.pick.tensor, quot}).tensor.data()));
        worst = std::max(worst, max_abs_diff(gm.place.tensor.data(),
                                             act(g, GeoTensor{base.place.tensor, quot}).tensor.data()));
        continue;
      }
      const auto& a = dynamic_cast<const AsrQNet&>(net);
      const auto b1 = a.q1(in), g1 = a.q1(moved);
      const auto triv = Representation::trivial(c4);
      worst = std::max(worst, max_abs_diff(g1.pick.tensor.data(),
                                           act(g, GeoTensor{b1.pick.tensor, triv}).tensor.data()));
      worst = std::max(worst, max_abs_diff(g1.place.tensor.data(),
                                           act(g, GeoTensor{b1.place.tensor, triv}).tensor.data()));
      worst = std::max(worst, max_abs_diff(g1.encoding.data(), b1.encoding.data()));
      const std::vector<Cell> cells = probe_cells(env);
      std::vector<Cell> gcells;
      for (const Cell& c : cells) gcells.push_back(act_on_pixel(PlanarElement::rotation(g), c, n, n));
      const Tensor q = a.q2(in, b1, cells).values, gq = a.q2(moved, g1, gcells).values;
      const auto perm = rho(quot, g);
      for (int b = 0; b < 2; ++b)
        for (int t = 0; t < 2; ++t)
          worst = std::max(worst, std::abs(gq.at(b * 2 + perm.map(t)) - q.at(b * 2 + t)));
    }
  }
  CheckResult r = finish("network_equivariance", worst, kEquivarianceTol);
  if (!net.config().equivariant) {
    r.expected_fail = true;
    r.detail = "conventional network; failure expected and excluded from the exit status";
  }
  return r;
}

CheckResult env_invariance(const GridStack& env, int samples, Rng& rng) {
  const EnvConfig& cfg = env.config();
  int mismatches = 0, compared = 0;
  for (std::uint64_t ep = 0; compared < samples; ++ep) {
    GridState s = env.reset(rng());
    for (int t = 0; t < cfg.step_limit && compared < samples; ++t) {
      const auto acts = env.actions(s);
      const SpatialAction a = uniform01(rng) < 0.5
                                  ? env.expert_action(s)
                                  : acts[uniform_int(rng, static_cast<int>(acts.size()))];
      const Transition tr = env.step(s, a);
      for (const auto& g : elements(Group::cyclic(4))) {
        const Transition gt = env.step(act(g, s, cfg), act(g, a, cfg));
        const GridState expected = act(g, tr.s_next, cfg);
        if (gt.s_next.dominoes != expected.dominoes || gt.s_next.holding != expected.holding ||
            gt.r != tr.r || gt.done != tr.done) {
          ++mismatches;
        }
        ++compared;
      }
      if (tr.done) break;
      s = tr.s_next;
    }
  }
  return finish("env_invariance", mismatches, 0.5,
                std::to_string(compared) + " rotated transitions, error = mismatch count");
}

CheckResult mdp_invariance(const SmallMdp& mdp) {
  const GridStack env(mdp.config);
  const Group c4 = Group::cyclic(4);
  long mismatches = 0, compared = 0;
  for (std::size_t s = 0; s < mdp.states.size(); ++s) {
    const GridState& state = mdp.states[s];
    for (const auto& g : elements(c4)) {
      const int gs = mdp.index_of(act(g, state, mdp.config));
      if (gs < 0 || mdp.goal[gs] != mdp.goal[s]) {
        ++mismatches;
        continue;
      }
      for (int a = 0; a < mdp.actions; ++a) {
        const std::size_t i = s * mdp.actions + a;
        const int ga = env.action_index(act(g, env.action_at(a, state.holding), mdp.config));
        const std::size_t j = static_cast<std::size_t>(gs) * mdp.actions + ga;
        const int expected = mdp.index_of(act(g, mdp.states[mdp.next[i]], mdp.config));
        if (mdp.next[j] != expected || mdp.reward[j] != mdp.reward[i]) ++mismatches;
        ++compared;
      }
    }
  }
  return finish("mdp_invariance", static_cast<double>(mismatches), 0.5,
                std::to_string(compared) + " rotated state-action pairs, error = mismatch count");
}

std::vector<CheckResult> op_gradients(int probes, Rng& rng) {
  std::vector<CheckResult> out;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f,
                   const std::vector<Tensor>& params) {
    const auto r = gradient_check(f, params, probes, rng);
    out.push_back(finish("gradient_" + name, r.max_rel_error, kGradientTol,
                         std::to_string(r.probes) + " probes"));
  };
  Tensor x = random_tensor({2, 4, 4, 4}, rng, true);
  auto unary = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& op) {
    const Tensor w = random_tensor({1, static_cast<int>(op(x).numel())}, rng);
    check(name, [&] { return probe_loss(op(x), w); }, {x});
  };
  {
    Tensor k = random_tensor({3, 4, 3, 3}, rng, true);
    Tensor kd = random_tensor({2, 3, 4, 3, 3}, rng, true);
    const Tensor w = random_tensor({1, static_cast<int>(ops::conv2d(x, k, 1, 1).numel())}, rng);
    Tensor x5 = random_tensor({2, 4, 5, 5}, rng, true);
    const Tensor w2 = random_tensor({1, static_cast<int>(ops::conv2d(x5, k, 2, 1).numel())}, rng);
    check("conv2d", [&] { return probe_loss(ops::conv2d(x, k, 1, 1), w); }, {x, k});
    check("conv2d_stride2", [&] { return probe_loss(ops::conv2d(x5, k, 2, 1), w2); }, {x5, k});
    check("conv2d_dynamic", [&] { return probe_loss(ops::conv2d(x, kd, 1, 1), w); }, {x, kd});
  }
  {
    Tensor b = random_tensor({4}, rng, true);
    const Tensor w = random_tensor({1, static_cast<int>(x.numel())}, rng);
    check("add_channel_bias", [&] { return probe_loss(ops::add_channel_bias(x, b), w); }, {x, b});
  }
  unary("relu", [](const Tensor& t) { return ops::relu(t); });
  unary("max_pool2d", [](const Tensor& t) { return ops::max_pool2d(t); });
  unary("upsample_nearest2d", [](const Tensor& t) { return ops::upsample_nearest2d(t); });
  unary("crop_patch", [](const Tensor& t) { return ops::crop_patch(t, {Cell{0, 1}, Cell{3, 3}}, 3); });
  unary("reshape", [](const Tensor& t) { return ops::reshape(t, {2, 64}); });
  unary("gather_last", [](const Tensor& t) { return ops::gather_last(t, {3, 0, 0, 2, 1}); });
  unary("fiber_max", [](const Tensor& t) { return ops::fiber_max(t, 2); });
  unary("spatial_mean", [](const Tensor& t) { return ops::spatial_mean(t); });
  unary("scale", [](const Tensor& t) { return ops::scale(t, -0.7); });
  unary("sum", [](const Tensor& t) { return ops::sum(t); });
  unary("mean", [](const Tensor& t) { return ops::mean(t); });
  {
    Tensor y = random_tensor({2, 4, 4, 4}, rng, true);
    const Tensor w = random_tensor({1, static_cast<int>(2 * x.numel())}, rng);
    check("concat", [&] { return probe_loss(ops::concat({x, y}), w); }, {x, y});
    const Tensor w1 = random_tensor({1, static_cast<int>(x.numel())}, rng);
    check("add", [&] { return probe_loss(ops::add(x, y), w1); }, {x, y});
  }
  {
    Tensor in = random_tensor({3, 5}, rng, true), wt = random_tensor({4, 5}, rng, true),
           b = random_tensor({4}, rng, true);
    const Tensor w = random_tensor({1, 12}, rng);
    check("linear", [&] { return probe_loss(ops::linear(in, wt, b), w); }, {in, wt, b});
  }
  {
    Tensor v = random_tensor({2, 3}, rng, true), u = random_tensor({2, 3}, rng, true);
    const Tensor wb = random_tensor({1, 2 * 3 * 2 * 9}, rng);
    check("broadcast_fields", [&] { return probe_loss(ops::broadcast_fields(v, 2, 3, 3), wb); }, {v});
    check("select_rows", [&] { return ops::sum(ops::select_rows(v, {2, 0})); }, {v});
    const Tensor ww = random_tensor({1, 6}, rng);
    check("where_rows", [&] { return probe_loss(ops::where_rows({true, false}, v, u), ww); }, {v, u});
  }
  {
    Tensor p = random_tensor({4}, rng, true), q = random_tensor({3, 5}, rng, true);
    check("huber_loss",
          [&] { return ops::huber_loss(p, {0.1, 2.5, -3.0, 0.2}, {1.0, 0.5, 2.0, 1.0}); }, {p});
    check("cross_entropy", [&] { return ops::cross_entropy(q, {0, 4, 2}); }, {q});
    check("strict_margin_loss",
          [&] { return ops::strict_margin_loss(q, {1, 2, 3}, {true, false, true}, 0.1); }, {q});
  }
  {
    const Group c4 = Group::cyclic(4);
    const KernelExpansion e(Representation::regular(c4), Representation::quotient(c4), 1, 2, 3);
    Tensor params = random_tensor({e.free_count()}, rng, true);
    const Tensor w = random_tensor({1, e.expanded_count()}, rng);
    check("kernel_expansion", [&] { return probe_loss(e.expand(params), w); }, {params});
    const GeoTensor g{x, Representation::regular(c4)};
    const Tensor wa = random_tensor({1, static_cast<int>(x.numel())}, rng);
    const auto r1 = GroupElement::rotation_by(c4, 1);
    check("group_action", [&] { return probe_loss(act(r1, GeoTensor{x, g.rep}).tensor, wa); }, {x});
    const Tensor wp = random_tensor({1, 2 * 16}, rng);
    check("group_pool", [&] { return probe_loss(group_pool(GeoTensor{x, g.rep}).tensor, wp); }, {x});
    Tensor v = random_tensor({2, 3}, rng, true);
    const Tensor wl = random_tensor({1, static_cast<int>(2 * (4 + 12) * 16)}, rng);
    check("lift_expand", [&] { return probe_loss(lift_expand(v, GeoTensor{x, g.rep}).tensor, wl); },
          {x, v});
  }
  return out;
}

CheckResult network_gradients(const QNetwork& net, const EnvConfig& env, int probes, Rng& rng) {
  const int n = env.grid_size, p = env.hand_patch;
  NetInput in;
  in.image = random_tensor({2, 1, n, n}, rng);
  in.hand = random_tensor({2, 1, p, p}, rng);
  in.holding = {false, true};
  std::function<Tensor()> loss;
  const int w2 = env.workspace * env.workspace;
  if (const auto* f = dynamic_cast<const FcnQNet*>(&net)) {
    const Tensor w = random_tensor({1, 2 * 2 * w2}, rng);
    loss = [=] { return probe_loss(f->q_values(in), w); };
  } else {
    const auto* a = dynamic_cast<const AsrQNet*>(&net);
    const Tensor w1 = random_tensor({1, 2 * w2}, rng), w2t = random_tensor({1, 4}, rng);
    const std::vector<Cell> cells = probe_cells(env);
    loss = [=] {
      const auto q1 = a->q1(in);
      return ops::add(probe_loss(q1.values, w1),
                      probe_loss(a->q2(in, q1, cells).values, w2t));
    };
  }
  const auto r = gradient_check(loss, net.parameters(), probes, rng);
  return finish("gradient_full_network", r.max_rel_error, kGradientTol,
                std::to_string(r.probes) + " probes over all parameters");
}

CheckResult deictic_permutation(int inputs, Rng& rng) {
  const Group c4 = Group::cyclic(4);
  const Tensor k = random_tensor({2, 1, 3, 3}, rng);
  const Tensor lin = random_tensor({1, 50}, rng);
  auto net = [&](const Tensor& patch) {
    return ops::linear(ops::reshape(ops::relu(ops::conv2d(patch, k, 1, 1)), {patch.dim(0), 50}), lin);
  };
  const auto els = elements(c4);
  double worst = 0.0;
  NoGradGuard ng;
  for (int i = 0; i < inputs; ++i) {
    const Tensor patch = random_tensor({2, 1, 5, 5}, rng);
    const Tensor base = deictic_eval(net, patch, els);
    for (const auto& g : els) {
      const Tensor moved = deictic_eval(net, act_spatial(g, patch), els);
      const auto perm = rho(Representation::regular(c4), g);
      for (int b = 0; b < 2; ++b)
        for (int j = 0; j < 4; ++j)
          worst = std::max(worst, std::abs(moved.at(b * 4 + perm.map(j)) - base.at(b * 4 + j)));
    }
  }
  return finish("deictic_permutation", worst, kEquivarianceTol);
}

}  // namespace steerq::checks
