#include "steerq/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "steerq/ops.hpp"

namespace steerq {

namespace {

// Regular fields for `width`, counted in rotation fibers: width / u fields
// for both C_u and D_u, so a dihedral layer carries twice the channels.
// Plain channels for C1.
int fields_for(const Group& g, int width, double conv_scale) {
  if (g.order() == 1) return std::max(1, static_cast<int>(std::lround(conv_scale * width)));
  if (width % g.rotations != 0 || width < g.rotations) {
    throw std::invalid_argument("width " + std::to_string(width) + " is not a positive multiple of u = " +
                                std::to_string(g.rotations));
  }
  return width / g.rotations;
}

Representation orientation_rep(const Group& g) {
  return g.order() == 1 ? Representation::regular(g) : Representation::quotient(g);
}
int orientation_fields(const Group& g) { return g.order() == 1 ? 2 : 1; }

void check_config(const NetConfig& c, const EnvConfig& env) {
  if (c.widths.size() != 3) throw std::invalid_argument("net.widths needs exactly 3 entries");
  if (c.equivariant && c.u != 4) {
    throw std::invalid_argument(
        "net.u must be 4: quarter turns are the only rotations that act exactly on the grid and "
        "the interpolated-filter extension is not built");
  }
  if (env.grid_size % 4 != 0) throw std::invalid_argument("grid size must be divisible by 4 for the UNet");
  if (c.crop < 1 || c.crop % 2 == 0) throw std::invalid_argument("net.crop must be odd");
  if (c.hand_features < 1) throw std::invalid_argument("net.hand_features must be positive");
  if (!c.equivariant && c.conv_scale <= 0) throw std::logic_error("conventional net without a width scale");
}

void add_conv(const std::string& name, const SteerableConv& c, NamedParams& out) {
  for (auto& p : c.named_parameters(name)) out.push_back(std::move(p));
}

Tensor workspace_values(const Tensor& maps, const EnvConfig& env) {
  const int w = env.workspace, center = env.workspace_lo() + w / 2;
  const std::vector<Cell> centers(maps.dim(0), Cell{center, center});
  const Tensor cropped = ops::crop_patch(maps, centers, w);
  return ops::reshape(cropped, {maps.dim(0), maps.dim(1) * w * w});
}

}  // namespace

std::string to_string(PartialMechanism m) {
  return m == PartialMechanism::DynamicFilter ? "dynamic_filter" : "lift_expansion";
}

PartialMechanism parse_mechanism(const std::string& s) {
  if (s == "dynamic_filter") return PartialMechanism::DynamicFilter;
  if (s == "lift_expansion") return PartialMechanism::LiftExpansion;
  throw std::invalid_argument("unknown partial-equivariance mechanism '" + s + "'");
}

NetInput make_input(const std::vector<Observation>& obs, const std::vector<bool>& holding) {
  if (obs.empty() || obs.size() != holding.size()) {
    throw std::invalid_argument("make_input: need one holding flag per observation");
  }
  const int b = static_cast<int>(obs.size());
  const int n = obs[0].heightmap.rows(), p = obs[0].hand.rows();
  std::vector<double> img, hand;
  img.reserve(static_cast<std::size_t>(b) * n * n);
  hand.reserve(static_cast<std::size_t>(b) * p * p);
  for (const Observation& o : obs) {
    img.insert(img.end(), o.heightmap.values().begin(), o.heightmap.values().end());
    hand.insert(hand.end(), o.hand.values().begin(), o.hand.values().end());
  }
  return {Tensor({b, 1, n, n}, std::move(img)), Tensor({b, 1, p, p}, std::move(hand)), holding};
}

Linear::Linear(int in, int out, Rng& rng, double scale) {
  std::vector<double> w = he_normal(static_cast<std::size_t>(in) * out, in, rng);
  for (double& v : w) v *= scale;
  weight = Tensor::parameter({out, in}, std::move(w));
  bias = Tensor::parameter({out}, std::vector<double>(out, 0.0));
}

Tensor Linear::forward(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

HandEncoder::HandEncoder(int patch, int features, Rng& rng) {
  k1_ = Tensor::parameter({4, 1, 3, 3}, he_normal(36, 9, rng));
  b1_ = Tensor::parameter({4}, std::vector<double>(4, 0.0));
  k2_ = Tensor::parameter({8, 4, 3, 3}, he_normal(288, 36, rng));
  b2_ = Tensor::parameter({8}, std::vector<double>(8, 0.0));
  const int side = (patch - 1) / 2 + 1;
  flat_ = 8 * side * side;
  fc1_ = Linear(flat_, 32, rng);
  fc2_ = Linear(32, features, rng);
}

Tensor HandEncoder::forward(const Tensor& hand) const {
  Tensor x = ops::relu(ops::add_channel_bias(ops::conv2d(hand, k1_, 1, 1), b1_));
  x = ops::relu(ops::add_channel_bias(ops::conv2d(x, k2_, 2, 1), b2_));
  x = ops::reshape(x, {hand.dim(0), flat_});
  return ops::relu(fc2_.forward(ops::relu(fc1_.forward(x))));
}

void HandEncoder::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".conv1.weight", k1_);
  out.emplace_back(prefix + ".conv1.bias", b1_);
  out.emplace_back(prefix + ".conv2.weight", k2_);
  out.emplace_back(prefix + ".conv2.bias", b2_);
  fc1_.collect(prefix + ".fc1", out);
  fc2_.collect(prefix + ".fc2", out);
}

SteerableUNet::SteerableUNet(Group g, std::vector<int> f, Rng& rng) {
  const auto triv = Representation::trivial(g), reg = Representation::regular(g);
  e0_ = SteerableConv(triv, reg, 1, f[0], 3, true, rng);
  e1_ = SteerableConv(reg, reg, f[0], f[1], 3, true, rng);
  e2_ = SteerableConv(reg, reg, f[1], f[2], 3, true, rng);
  d1_ = SteerableConv(reg, reg, f[2] + f[1], f[1], 3, true, rng);
  d0_ = SteerableConv(reg, reg, f[1] + f[0], f[0], 3, true, rng);
}

SteerableUNet::Out SteerableUNet::forward(const GeoTensor& image) const {
  const GeoTensor x0 = relu(e0_.forward(image));
  const GeoTensor x1 = relu(e1_.forward(max_pool(x0)));
  const GeoTensor x2 = relu(e2_.forward(max_pool(x1)));
  const GeoTensor y1 = relu(d1_.forward(concat_fields({upsample(x2), x1})));
  const GeoTensor y0 = relu(d0_.forward(concat_fields({upsample(y1), x0})));
  return {y0, x2};
}

void SteerableUNet::collect(const std::string& prefix, NamedParams& out) const {
  add_conv(prefix + ".enc0", e0_, out);
  add_conv(prefix + ".enc1", e1_, out);
  add_conv(prefix + ".enc2", e2_, out);
  add_conv(prefix + ".dec1", d1_, out);
  add_conv(prefix + ".dec0", d0_, out);
}

ConditionedConv::ConditionedConv(Group g, int fields, int cond_dim, PartialMechanism mechanism,
                                 Rng& rng)
    : mechanism_(mechanism) {
  const auto reg = Representation::regular(g);
  if (mechanism == PartialMechanism::DynamicFilter) {
    conv_ = SteerableConv(reg, reg, fields, fields, 3, true, rng);
    const int f = conv_.expansion().free_count();
    // the generated kernel starts near a static He-initialised kernel and is
    // modulated by the conditioning vector
    gen_ = Linear(cond_dim, f, rng, 0.5 * std::sqrt(2.0 / (9.0 * conv_.expansion().in_channels())));
    auto b = gen_.bias.mutable_data();
    const auto init = he_normal(f, 9 * conv_.expansion().in_channels(), rng);
    std::copy(init.begin(), init.end(), b.begin());
  } else {
    gen_ = Linear(cond_dim, fields, rng);
    conv_ = SteerableConv(reg, reg, 2 * fields, fields, 3, true, rng);
  }
}

GeoTensor ConditionedConv::forward(const GeoTensor& x, const Tensor& cond) const {
  if (mechanism_ == PartialMechanism::DynamicFilter) {
    return relu(conv_.forward_dynamic(x, gen_.forward(cond)));
  }
  return relu(conv_.forward(lift_expand(gen_.forward(cond), x)));
}

void ConditionedConv::collect(const std::string& prefix, NamedParams& out) const {
  gen_.collect(prefix + ".generator", out);
  if (mechanism_ == PartialMechanism::DynamicFilter) {
    // the template's own weight is unused; only its bias is a parameter
    out.emplace_back(prefix + ".conv.bias", conv_.bias());
  } else {
    add_conv(prefix + ".conv", conv_, out);
  }
}

std::vector<Tensor> QNetwork::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

Group QNetwork::group() const {
  return config_.equivariant ? Group::cyclic(config_.u) : Group::cyclic(1);
}

FcnQNet::FcnQNet(NetConfig config, const EnvConfig& env, Rng& rng)
    : QNetwork(std::move(config)), env_(env) {
  check_config(config_, env_);
  const Group g = group();
  std::vector<int> f;
  for (int w : config_.widths) f.push_back(fields_for(g, w, config_.conv_scale));
  hand_ = HandEncoder(env.hand_patch, config_.hand_features, rng);
  unet_ = SteerableUNet(g, f, rng);
  const auto reg = Representation::regular(g);
  pick_head_ = SteerableConv(reg, orientation_rep(g), f[0], orientation_fields(g), 1, true, rng);
  place_branch_ = ConditionedConv(g, f[0], config_.hand_features, config_.mechanism, rng);
  place_head_ = SteerableConv(reg, orientation_rep(g), f[0], orientation_fields(g), 1, true, rng);
}

QMaps FcnQNet::forward(const NetInput& in) const {
  const Group g = group();
  const GeoTensor image = make_geo(in.image, Representation::trivial(g));
  const GeoTensor features = unet_.forward(image).features;
  const Tensor h = hand_.forward(in.hand);
  return {pick_head_.forward(features), place_head_.forward(place_branch_.forward(features, h))};
}

Tensor FcnQNet::q_values(const NetInput& in) const {
  const QMaps maps = forward(in);
  return workspace_values(ops::where_rows(in.holding, maps.pick.tensor, maps.place.tensor), env_);
}

NamedParams FcnQNet::named_parameters() const {
  NamedParams out;
  hand_.collect("hand", out);
  unet_.collect("unet", out);
  add_conv("pick_head", pick_head_, out);
  place_branch_.collect("place_branch", out);
  add_conv("place_head", place_head_, out);
  return out;
}

Group AsrQNet::position_group() const {
  return config_.equivariant ? Group::dihedral_group(config_.u) : Group::cyclic(1);
}

AsrQNet::AsrQNet(NetConfig config, const EnvConfig& env, Rng& rng)
    : QNetwork(std::move(config)), env_(env) {
  check_config(config_, env_);
  const Group g1 = position_group(), g2 = group();
  std::vector<int> f;
  for (int w : config_.widths) f.push_back(fields_for(g1, w, config_.conv_scale));
  const int m = fields_for(g2, config_.q2_width, config_.conv_scale);

  hand_ = HandEncoder(env.hand_patch, config_.hand_features, rng);
  unet_ = SteerableUNet(g1, f, rng);
  const auto reg1 = Representation::regular(g1), triv1 = Representation::trivial(g1);
  q1_pick_ = SteerableConv(reg1, triv1, f[0], 1, 1, true, rng);
  q1_branch_ = ConditionedConv(g1, f[0], config_.hand_features, config_.mechanism, rng);
  q1_place_ = SteerableConv(reg1, triv1, f[0], 1, 1, true, rng);

  const auto reg2 = Representation::regular(g2), triv2 = Representation::trivial(g2);
  c1_ = SteerableConv(triv2, reg2, 1, m, 3, true, rng);
  c2_ = SteerableConv(reg2, reg2, m, m, 3, true, rng);
  q2_branch_ = ConditionedConv(g2, m, config_.hand_features + f[2], config_.mechanism, rng);
  q2_pick_ = SteerableConv(reg2, orientation_rep(g2), m, orientation_fields(g2), 1, true, rng);
  q2_place_ = SteerableConv(reg2, orientation_rep(g2), m, orientation_fields(g2), 1, true, rng);
}

AsrQNet::Q1Out AsrQNet::q1(const NetInput& in) const {
  const Group g1 = position_group();
  const auto out = unet_.forward(make_geo(in.image, Representation::trivial(g1)));
  Q1Out r;
  r.hand = hand_.forward(in.hand);
  r.pick = q1_pick_.forward(out.features);
  r.place = q1_place_.forward(q1_branch_.forward(out.features, r.hand));
  r.values = workspace_values(ops::where_rows(in.holding, r.pick.tensor, r.place.tensor), env_);
  r.encoding = ops::spatial_mean(group_pool(out.bottleneck).tensor);
  return r;
}

AsrQNet::Q2Out AsrQNet::q2_patch(const Tensor& patch, const Tensor& hand_features,
                                 const Tensor& encoding, const std::vector<bool>& holding) const {
  const Group g2 = group();
  const int b = patch.dim(0), c = patch.dim(2);
  GeoTensor x = relu(c1_.forward(make_geo(patch, Representation::trivial(g2))));
  x = relu(c2_.forward(x));
  x = q2_branch_.forward(x, ops::concat({hand_features, encoding}));
  const GeoTensor center{ops::crop_patch(x.tensor, std::vector<Cell>(b, Cell{c / 2, c / 2}), 1), x.rep};
  Q2Out r;
  r.pick = ops::reshape(q2_pick_.forward(center).tensor, {b, 2});
  r.place = ops::reshape(q2_place_.forward(center).tensor, {b, 2});
  r.values = ops::where_rows(holding, r.pick, r.place);
  return r;
}

AsrQNet::Q2Out AsrQNet::q2(const NetInput& in, const Q1Out& q1out,
                           const std::vector<Cell>& cells) const {
  return q2_patch(ops::crop_patch(in.image, cells, config_.crop), q1out.hand, q1out.encoding,
                  in.holding);
}

NamedParams AsrQNet::named_parameters() const {
  NamedParams out;
  hand_.collect("hand", out);
  unet_.collect("q1.unet", out);
  add_conv("q1.pick_head", q1_pick_, out);
  q1_branch_.collect("q1.place_branch", out);
  add_conv("q1.place_head", q1_place_, out);
  add_conv("q2.conv1", c1_, out);
  add_conv("q2.conv2", c2_, out);
  q2_branch_.collect("q2.branch", out);
  add_conv("q2.pick_head", q2_pick_, out);
  add_conv("q2.place_head", q2_place_, out);
  return out;
}

namespace {

std::unique_ptr<QNetwork> build(const NetConfig& c, const EnvConfig& env, Rng& rng) {
  if (c.arch == Architecture::Fcn) return std::make_unique<FcnQNet>(c, env, rng);
  return std::make_unique<AsrQNet>(c, env, rng);
}

}  // namespace

double matched_conv_scale(NetConfig config, const EnvConfig& env) {
  Rng rng(0);
  config.equivariant = true;
  const double target = static_cast<double>(build(config, env, rng)->parameter_count());
  config.equivariant = false;
  // the count is nondecreasing in the scale: bisect on a 0.01 grid for the
  // first scale reaching the target, then take the closer neighbour
  auto count = [&](int step) {
    config.conv_scale = 0.01 * step;
    return static_cast<double>(build(config, env, rng)->parameter_count());
  };
  int lo = 5, hi = 400;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (count(mid) >= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  const int best = (lo > 5 && std::abs(count(lo - 1) - target) <= std::abs(count(lo) - target)) ? lo - 1 : lo;
  return 0.01 * best;
}

std::unique_ptr<QNetwork> make_network(const NetConfig& config, const EnvConfig& env, Rng& rng) {
  NetConfig c = config;
  if (!c.equivariant && c.conv_scale <= 0) c.conv_scale = matched_conv_scale(c, env);
  return build(c, env, rng);
}

void copy_parameters(const QNetwork& from, QNetwork& to) {
  const NamedParams src = from.named_parameters();
  NamedParams dst = to.named_parameters();
  if (src.size() != dst.size()) throw std::invalid_argument("copy_parameters: architectures differ");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first || src[i].second.shape() != dst[i].second.shape()) {
      throw std::invalid_argument("copy_parameters: mismatch at " + src[i].first);
    }
    auto d = dst[i].second.mutable_data();
    std::copy(src[i].second.data().begin(), src[i].second.data().end(), d.begin());
  }
}

std::vector<int> argmax_rows(const Tensor& q) {
  if (q.rank() != 2) throw std::invalid_argument("argmax_rows: expected [B,n]");
  const int b = q.dim(0), n = q.dim(1);
  std::vector<int> out(b, 0);
  for (int r = 0; r < b; ++r) {
    const double* row = q.data().data() + static_cast<std::size_t>(r) * n;
    for (int i = 1; i < n; ++i)
      if (row[i] > row[out[r]]) out[r] = i;
  }
  return out;
}

std::vector<SpatialAction> asr_select(const AsrQNet& net, const NetInput& in,
                                      const EnvConfig& env, double epsilon, Rng& rng) {
  if (epsilon < 0 || epsilon > 1) throw std::invalid_argument("asr_select: epsilon outside [0,1]");
  NoGradGuard no_grad;
  const int b = in.batch(), w = env.workspace, lo = env.workspace_lo();
  const auto q1out = net.q1(in);
  const auto pos = argmax_rows(q1out.values);
  std::vector<bool> explore(b);
  std::vector<Cell> cells(b);
  std::vector<int> random_theta(b);
  for (int r = 0; r < b; ++r) {
    explore[r] = uniform01(rng) < epsilon;
    const int idx = explore[r] ? uniform_int(rng, w * w) : pos[r];
    if (explore[r]) random_theta[r] = uniform_int(rng, EnvConfig::theta_count);
    cells[r] = {lo + idx / w, lo + idx % w};
  }
  const auto theta = argmax_rows(net.q2(in, q1out, cells).values);
  std::vector<SpatialAction> out(b);
  for (int r = 0; r < b; ++r) {
    out[r] = {cells[r], explore[r] ? random_theta[r] : theta[r],
              in.holding[r] ? ActionKind::Place : ActionKind::Pick};
  }
  return out;
}

std::vector<double> asr_q_value(const AsrQNet& net, const NetInput& in, const EnvConfig& env,
                                const std::vector<SpatialAction>& actions) {
  (void)env;
  NoGradGuard no_grad;
  const auto q1out = net.q1(in);
  std::vector<Cell> cells;
  for (const auto& a : actions) cells.push_back(a.x);
  const Tensor v = net.q2(in, q1out, cells).values;
  std::vector<double> out;
  for (std::size_t r = 0; r < actions.size(); ++r) out.push_back(v.at(r * 2 + actions[r].theta));
  return out;
}

std::vector<SpatialAction> fcn_select(const FcnQNet& net, const NetInput& in,
                                      const GridStack& env, double epsilon, Rng& rng) {
  if (epsilon < 0 || epsilon > 1) throw std::invalid_argument("fcn_select: epsilon outside [0,1]");
  NoGradGuard no_grad;
  const auto best = argmax_rows(net.q_values(in));
  std::vector<SpatialAction> out;
  for (int r = 0; r < in.batch(); ++r) {
    const int idx = uniform01(rng) < epsilon ? uniform_int(rng, env.action_count()) : best[r];
    out.push_back(env.action_at(idx, in.holding[r]));
  }
  return out;
}

}  // namespace steerq
