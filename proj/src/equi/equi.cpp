#include "steerq/equi.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "steerq/ops.hpp"

namespace steerq {

namespace {

void require_lattice(const Group& g, const char* what) {
  if (!g.lattice_exact()) {
    throw std::invalid_argument(std::string(what) + ": " + g.name() +
                                " rotations do not map the pixel lattice onto itself");
  }
}

int find(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

// flat index map for g acting on [C,H,W] with C = fields * rep.dim():
// result[dest] = source
std::vector<int> action_index(const GroupElement& g, const Representation& rep, int channels,
                              int h, int w) {
  require_lattice(g.group, "act");
  if (h != w) throw std::invalid_argument("act: feature maps must be square");
  const int d = rep.dim();
  if (channels % d != 0) throw std::invalid_argument("act: channels not a multiple of fiber size");
  std::vector<int> slot(d, 0);
  if (rep.kind == RepKind::Trivial) {
    slot[0] = 0;
  } else {
    slot = rho(rep, g).perm();
  }
  const PlanarElement pg = PlanarElement::rotation(g);
  std::vector<int> pix(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const Cell q = act_on_pixel(pg, {r, c}, h, w);
      pix[r * w + c] = q.row * w + q.col;
    }
  std::vector<int> index(static_cast<std::size_t>(channels) * h * w);
  for (int ch = 0; ch < channels; ++ch) {
    const int dest_ch = (ch / d) * d + slot[ch % d];
    for (int p = 0; p < h * w; ++p) index[dest_ch * h * w + pix[p]] = ch * h * w + p;
  }
  return index;
}

Tensor gather_image(const Tensor& x, const std::vector<int>& index) {
  const Shape shape = x.shape();
  const Tensor flat = ops::reshape(x, {shape[0], shape[1] * shape[2] * shape[3]});
  return ops::reshape(ops::gather_last(flat, index), shape);
}

}  // namespace

GeoTensor make_geo(Tensor t, Representation rep) {
  if (t.rank() != 4 || t.dim(1) % rep.dim() != 0) {
    throw std::invalid_argument("GeoTensor: shape " + shape_str(t.shape()) +
                                " does not carry fields of " + rep.name());
  }
  return {std::move(t), rep};
}

GeoTensor act(const GroupElement& g, const GeoTensor& x) {
  if (x.rep.kind != RepKind::Trivial && !(x.rep.group == g.group)) {
    throw std::invalid_argument("act: element of " + g.group.name() + " on " + x.rep.name());
  }
  const auto index = action_index(g, x.rep, x.tensor.dim(1), x.height(), x.width());
  return {gather_image(x.tensor, index), x.rep};
}

Tensor act_spatial(const GroupElement& g, const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("act_spatial: expected [B,C,H,W]");
  const auto index = action_index(g, Representation::trivial(g.group), x.dim(1), x.dim(2), x.dim(3));
  return gather_image(x, index);
}

KernelExpansion::KernelExpansion(Representation in, Representation out, int in_fields,
                                 int out_fields, int kernel)
    : in_(in), out_(out), in_fields_(in_fields), out_fields_(out_fields), k_(kernel) {
  if (in_fields < 1 || out_fields < 1 || kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("KernelExpansion: fields must be positive and kernel odd");
  }
  if (!(in.group == out.group)) {
    throw std::invalid_argument("KernelExpansion: " + in.name() + " and " + out.name() +
                                " are over different groups");
  }
  require_lattice(in.group, "KernelExpansion");

  const int di = in.dim(), d_out = out.dim(), kk = k_ * k_;
  const int block = d_out * di * kk;
  const int c = (k_ - 1) / 2;
  auto entry = [&](int o, int i, int ky, int kx) { return ((o * di + i) * k_ + ky) * k_ + kx; };

  std::vector<int> parent(block);
  std::iota(parent.begin(), parent.end(), 0);
  for (const GroupElement& g : elements(in.group)) {
    const PermutationMatrix ro = rho(out, g), ri = rho(in, g);
    for (int o = 0; o < d_out; ++o)
      for (int i = 0; i < di; ++i)
        for (int ky = 0; ky < k_; ++ky)
          for (int kx = 0; kx < k_; ++kx) {
            const Cell y = act_on_offset(g, {ky - c, kx - c});
            const int a = find(parent, entry(o, i, ky, kx));
            const int b = find(parent, entry(ro.map(o), ri.map(i), y.row + c, y.col + c));
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
          }
  }
  std::vector<int> orbit_of_root(block, -1), orbit(block);
  for (int e = 0; e < block; ++e) {
    const int r = find(parent, e);
    if (orbit_of_root[r] < 0) orbit_of_root[r] = orbits_++;
    orbit[e] = orbit_of_root[r];
  }

  index_.resize(static_cast<std::size_t>(expanded_count()));
  std::size_t n = 0;
  for (int fo = 0; fo < out_fields_; ++fo)
    for (int o = 0; o < d_out; ++o)
      for (int fi = 0; fi < in_fields_; ++fi)
        for (int i = 0; i < di; ++i)
          for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx)
              index_[n++] = (fo * in_fields_ + fi) * orbits_ + orbit[entry(o, i, ky, kx)];
}

Tensor KernelExpansion::expand(const Tensor& params) const {
  if (params.rank() == 1 && params.dim(0) == free_count()) {
    return ops::reshape(ops::gather_last(params, index_),
                        {out_channels(), in_channels(), k_, k_});
  }
  if (params.rank() == 2 && params.dim(1) == free_count()) {
    return ops::reshape(ops::gather_last(params, index_),
                        {params.dim(0), out_channels(), in_channels(), k_, k_});
  }
  throw std::invalid_argument("KernelExpansion: expected " + std::to_string(free_count()) +
                              " free parameters, got shape " + shape_str(params.shape()));
}

double kernel_constraint_error(const Tensor& kernel, const Representation& in,
                               const Representation& out) {
  if (kernel.rank() != 4 && kernel.rank() != 5) {
    throw std::invalid_argument("kernel_constraint_error: kernel must be rank 4 or 5");
  }
  const int lead = kernel.rank() - 4;
  const int batch = lead ? kernel.dim(0) : 1;
  const int co = kernel.dim(lead), ci = kernel.dim(lead + 1), k = kernel.dim(lead + 2);
  const int d_out = out.dim(), di = in.dim();
  if (co % d_out != 0 || ci % di != 0) {
    throw std::invalid_argument("kernel_constraint_error: channels do not match representations");
  }
  const int c = (k - 1) / 2;
  const auto kv = kernel.data();
  auto at = [&](int b, int o, int i, int ky, int kx) {
    return kv[(((static_cast<std::size_t>(b) * co + o) * ci + i) * k + ky) * k + kx];
  };
  double worst = 0.0;
  for (const GroupElement& g : elements(in.group)) {
    // dense rho_out(g) and rho_in(g)^-1
    const std::vector<double> po = rho(out, g).dense();
    const std::vector<double> pi = rho(in, g).inverse().dense();
    for (int b = 0; b < batch; ++b)
      for (int fo = 0; fo < co / d_out; ++fo)
        for (int fi = 0; fi < ci / di; ++fi)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const Cell y = act_on_offset(g, {ky - c, kx - c});
              for (int o = 0; o < d_out; ++o)
                for (int i = 0; i < di; ++i) {
                  // (rho_out K(y) rho_in^-1)[o][i]
                  double rhs = 0.0;
                  for (int p = 0; p < d_out; ++p)
                    for (int q = 0; q < di; ++q)
                      rhs += po[o * d_out + p] * at(b, fo * d_out + p, fi * di + q, ky, kx) *
                             pi[q * di + i];
                  const double lhs = at(b, fo * d_out + o, fi * di + i, y.row + c, y.col + c);
                  worst = std::max(worst, std::abs(lhs - rhs));
                }
            }
  }
  return worst;
}

std::vector<double> he_normal(std::size_t count, int fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / std::max(1, fan_in));
  std::vector<double> v(count);
  for (double& x : v) x = sd * normal(rng);
  return v;
}

SteerableConv::SteerableConv(Representation in, Representation out, int in_fields,
                             int out_fields, int kernel, bool bias, Rng& rng)
    : expansion_(in, out, in_fields, out_fields, kernel) {
  weight_ = Tensor::parameter(
      {expansion_.free_count()},
      he_normal(expansion_.free_count(), expansion_.in_channels() * kernel * kernel, rng));
  if (bias) bias_ = Tensor::parameter({out_fields}, std::vector<double>(out_fields, 0.0));
}

GeoTensor SteerableConv::finish(const GeoTensor& x, Tensor out) const {
  (void)x;
  if (bias_.defined()) {
    const int d = expansion_.out_rep().dim();
    std::vector<int> idx(expansion_.out_channels());
    for (int c = 0; c < expansion_.out_channels(); ++c) idx[c] = c / d;
    out = ops::add_channel_bias(out, ops::gather_last(bias_, idx));
  }
  return {std::move(out), expansion_.out_rep()};
}

GeoTensor SteerableConv::forward(const GeoTensor& x) const {
  if (!(x.rep == expansion_.in_rep()) || x.tensor.dim(1) != expansion_.in_channels()) {
    throw std::invalid_argument("SteerableConv: expected " +
                                std::to_string(expansion_.in_fields()) + " fields of " +
                                expansion_.in_rep().name() + ", got " + x.rep.name() + " " +
                                shape_str(x.tensor.shape()));
  }
  const int k = expansion_.kernel();
  return finish(x, ops::conv2d(x.tensor, expansion_.expand(weight_), 1, (k - 1) / 2));
}

GeoTensor SteerableConv::forward_dynamic(const GeoTensor& x, const Tensor& weight_vec) const {
  if (!(x.rep == expansion_.in_rep()) || x.tensor.dim(1) != expansion_.in_channels()) {
    throw std::invalid_argument("SteerableConv: input does not match layer");
  }
  const int k = expansion_.kernel();
  return finish(x, ops::conv2d(x.tensor, dynamic_filter(weight_vec, expansion_), 1, (k - 1) / 2));
}

std::vector<std::pair<std::string, Tensor>> SteerableConv::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out{{prefix + ".weight", weight_}};
  if (bias_.defined()) out.emplace_back(prefix + ".bias", bias_);
  return out;
}

Tensor dynamic_filter(const Tensor& weight_vec, const KernelExpansion& expansion) {
  if (weight_vec.rank() != 2 || weight_vec.dim(1) != expansion.free_count()) {
    throw std::invalid_argument("dynamic_filter: expected [B," + std::to_string(expansion.free_count()) +
                                "] weights, got " + shape_str(weight_vec.shape()));
  }
  return expansion.expand(weight_vec);
}

GeoTensor group_pool(const GeoTensor& x) {
  if (x.rep.kind == RepKind::Trivial) {
    throw std::invalid_argument("group_pool: input is already trivial");
  }
  return {ops::fiber_max(x.tensor, x.rep.dim()), Representation::trivial(x.rep.group)};
}

GeoTensor lift_expand(const Tensor& vec, const GeoTensor& x) {
  Tensor v = vec;
  if (v.rank() == 1) v = ops::reshape(v, {1, v.dim(0)});
  if (v.rank() != 2 || v.dim(0) != x.batch()) {
    throw std::invalid_argument("lift_expand: vector batch does not match feature map");
  }
  if (v.dim(1) == 0) return x;
  const Tensor tiled = ops::broadcast_fields(v, x.rep.dim(), x.height(), x.width());
  return {ops::concat({x.tensor, tiled}), x.rep};
}

GeoTensor concat_fields(const std::vector<GeoTensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_fields: no inputs");
  std::vector<Tensor> ts;
  for (const GeoTensor& p : parts) {
    if (!(p.rep == parts[0].rep)) throw std::invalid_argument("concat_fields: mixed reps");
    ts.push_back(p.tensor);
  }
  return {ops::concat(ts), parts[0].rep};
}

GeoTensor relu(const GeoTensor& x) { return {ops::relu(x.tensor), x.rep}; }
GeoTensor max_pool(const GeoTensor& x) { return {ops::max_pool2d(x.tensor), x.rep}; }
GeoTensor upsample(const GeoTensor& x) { return {ops::upsample_nearest2d(x.tensor), x.rep}; }

Tensor deictic_eval(const std::function<Tensor(const Tensor&)>& net, const Tensor& patch,
                    const std::vector<GroupElement>& elements) {
  if (elements.empty()) throw std::invalid_argument("deictic_eval: no group elements");
  std::vector<Tensor> cols;
  for (const GroupElement& g : elements) {
    Tensor v = net(act_spatial(inverse(g), patch));
    if (v.numel() != static_cast<std::size_t>(patch.dim(0))) {
      throw std::invalid_argument("deictic_eval: network must return one scalar per sample");
    }
    cols.push_back(ops::reshape(v, {patch.dim(0), 1}));
  }
  return ops::concat(cols);
}

}  // namespace steerq
