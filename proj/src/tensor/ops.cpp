#include "steerq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "steerq/kernels.hpp"

namespace steerq::ops {

namespace {

using detail::Node;

struct Dims4 {
  int b, c, h, w;
  bool batched;
};

Dims4 image_dims(const Tensor& x, const char* op) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
  throw std::invalid_argument(std::string(op) + ": expected [B,C,H,W] or [C,H,W], got " +
                              shape_str(x.shape()));
}

Shape image_shape(const Dims4& d, int c, int h, int w) {
  return d.batched ? Shape{d.b, c, h, w} : Shape{c, h, w};
}

// grad buffer of parent i if it takes gradients, else nullptr
double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

const double* parent_value(const Node& self, std::size_t i) {
  return self.parents[i]->value.data();
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  const Dims4 d = image_dims(input, "conv2d");
  kernels::ConvGeometry g;
  g.batch = d.b;
  g.in_channels = d.c;
  g.height = d.h;
  g.width = d.w;
  g.stride = stride;
  g.pad = padding;
  if (kernel.rank() == 4) {
    g.out_channels = kernel.dim(0);
    if (kernel.dim(1) != d.c || kernel.dim(2) != kernel.dim(3)) {
      throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                  " does not match input " + shape_str(input.shape()));
    }
    g.kernel = kernel.dim(2);
  } else if (kernel.rank() == 5) {
    g.per_sample_kernel = true;
    g.out_channels = kernel.dim(1);
    if (kernel.dim(0) != d.b || kernel.dim(2) != d.c || kernel.dim(3) != kernel.dim(4)) {
      throw std::invalid_argument("conv2d: per-sample kernel " + shape_str(kernel.shape()) +
                                  " does not match input " + shape_str(input.shape()));
    }
    g.kernel = kernel.dim(3);
  } else {
    throw std::invalid_argument("conv2d: kernel must be rank 4 or 5");
  }
  g.validate();

  std::vector<double> out(g.output_size());
  kernels::parallel::conv2d_forward(g, input.data().data(), kernel.data().data(), out.data());
  return Tensor::make_result(
      image_shape(d, g.out_channels, g.out_height(), g.out_width()), std::move(out),
      {input, kernel}, [g](Node& self) {
        if (double* gx = parent_grad(self, 0)) {
          kernels::parallel::conv2d_backward_input(g, parent_value(self, 1), self.grad.data(), gx);
        }
        if (double* gw = parent_grad(self, 1)) {
          kernels::parallel::conv2d_backward_weight(g, parent_value(self, 0), self.grad.data(), gw);
        }
      });
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
  const Dims4 d = image_dims(input, "add_channel_bias");
  if (bias.rank() != 1 || bias.dim(0) != d.c) {
    throw std::invalid_argument("add_channel_bias: bias " + shape_str(bias.shape()) +
                                " for input " + shape_str(input.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<double> out(input.data().begin(), input.data().end());
  const auto bv = bias.data();
  for (int b = 0; b < d.b; ++b)
    for (int c = 0; c < d.c; ++c) {
      double* p = out.data() + (static_cast<std::size_t>(b) * d.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += bv[c];
    }
  return Tensor::make_result(input.shape(), std::move(out), {input, bias}, [d, plane](Node& self) {
    const double* go = self.grad.data();
    if (double* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += go[i];
    }
    if (double* gb = parent_grad(self, 1)) {
      for (int b = 0; b < d.b; ++b)
        for (int c = 0; c < d.c; ++c) {
          const double* p = go + (static_cast<std::size_t>(b) * d.c + c) * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
          gb[c] += acc;
        }
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    double* gx = parent_grad(self, 0);
    const double* xv = parent_value(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (xv[i] > 0.0) gx[i] += self.grad[i];
  });
}

Tensor max_pool2d(const Tensor& x) {
  const Dims4 d = image_dims(x, "max_pool2d");
  if (d.h % 2 != 0 || d.w % 2 != 0) {
    throw std::invalid_argument("max_pool2d: spatial size must be even, got " +
                                shape_str(x.shape()));
  }
  const int ho = d.h / 2, wo = d.w / 2;
  std::vector<double> out(static_cast<std::size_t>(d.b) * d.c * ho * wo);
  std::vector<std::size_t> arg(out.size());
  const auto xv = x.data();
  std::size_t o = 0;
  for (int bc = 0; bc < d.b * d.c; ++bc) {
    const std::size_t base = static_cast<std::size_t>(bc) * d.h * d.w;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * oy) * d.w + 2 * ox;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i = base + static_cast<std::size_t>(2 * oy + dy) * d.w + 2 * ox + dx;
            if (xv[i] > xv[best]) best = i;
          }
        out[o] = xv[best];
        arg[o] = best;
      }
  }
  return Tensor::make_result(image_shape(d, d.c, ho, wo), std::move(out), {x},
                             [arg = std::move(arg)](Node& self) {
                               double* gx = parent_grad(self, 0);
                               for (std::size_t i = 0; i < arg.size(); ++i)
                                 gx[arg[i]] += self.grad[i];
                             });
}

Tensor upsample_nearest2d(const Tensor& x) {
  const Dims4 d = image_dims(x, "upsample_nearest2d");
  const int ho = 2 * d.h, wo = 2 * d.w;
  std::vector<double> out(static_cast<std::size_t>(d.b) * d.c * ho * wo);
  const auto xv = x.data();
  for (int bc = 0; bc < d.b * d.c; ++bc) {
    const double* in = xv.data() + static_cast<std::size_t>(bc) * d.h * d.w;
    double* op = out.data() + static_cast<std::size_t>(bc) * ho * wo;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) op[oy * wo + ox] = in[(oy / 2) * d.w + ox / 2];
  }
  return Tensor::make_result(image_shape(d, d.c, ho, wo), std::move(out), {x}, [d](Node& self) {
    double* gx = parent_grad(self, 0);
    const int ho = 2 * d.h, wo = 2 * d.w;
    for (int bc = 0; bc < d.b * d.c; ++bc) {
      const double* go = self.grad.data() + static_cast<std::size_t>(bc) * ho * wo;
      double* gi = gx + static_cast<std::size_t>(bc) * d.h * d.w;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) gi[(oy / 2) * d.w + ox / 2] += go[oy * wo + ox];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1)) {
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " weight " +
                                shape_str(weight.shape()));
  }
  const int n = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != outf)) {
    throw std::invalid_argument("linear: bias " + shape_str(bias.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(n) * outf);
  const auto xv = x.data(), wv = weight.data();
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < outf; ++o) {
      double acc = has_bias ? bias.data()[o] : 0.0;
      for (int i = 0; i < in; ++i) acc += wv[static_cast<std::size_t>(o) * in + i] * xv[static_cast<std::size_t>(b) * in + i];
      out[static_cast<std::size_t>(b) * outf + o] = acc;
    }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result({n, outf}, std::move(out), std::move(inputs),
                             [n, in, outf, has_bias](Node& self) {
                               const double* go = self.grad.data();
                               const double* xv = parent_value(self, 0);
                               const double* wv = parent_value(self, 1);
                               if (double* gx = parent_grad(self, 0)) {
                                 for (int b = 0; b < n; ++b)
                                   for (int o = 0; o < outf; ++o) {
                                     const double g = go[static_cast<std::size_t>(b) * outf + o];
                                     for (int i = 0; i < in; ++i)
                                       gx[static_cast<std::size_t>(b) * in + i] += g * wv[static_cast<std::size_t>(o) * in + i];
                                   }
                               }
                               if (double* gw = parent_grad(self, 1)) {
                                 for (int b = 0; b < n; ++b)
                                   for (int o = 0; o < outf; ++o) {
                                     const double g = go[static_cast<std::size_t>(b) * outf + o];
                                     for (int i = 0; i < in; ++i)
                                       gw[static_cast<std::size_t>(o) * in + i] += g * xv[static_cast<std::size_t>(b) * in + i];
                                   }
                               }
                               if (has_bias) {
                                 if (double* gb = parent_grad(self, 2)) {
                                   for (int b = 0; b < n; ++b)
                                     for (int o = 0; o < outf; ++o) gb[o] += go[static_cast<std::size_t>(b) * outf + o];
                                 }
                               }
                             });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.size() < 2) throw std::invalid_argument("concat: inputs need rank >= 2");
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s0.size(); ++i) inner *= s0[i];
  int total = 0;
  std::vector<int> widths;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == s0.size() && s[0] == s0[0];
    for (std::size_t i = 2; ok && i < s.size(); ++i) ok = s[i] == s0[i];
    if (!ok) {
      throw std::invalid_argument("concat: " + shape_str(s) + " incompatible with " +
                                  shape_str(s0));
    }
    widths.push_back(s[1]);
    total += s[1];
  }
  const int batch = s0[0];
  Shape out_shape = s0;
  out_shape[1] = total;
  std::vector<double> out(shape_numel(out_shape));
  for (int b = 0; b < batch; ++b) {
    std::size_t offset = static_cast<std::size_t>(b) * total * inner;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::size_t len = widths[p] * inner;
      const double* src = parts[p].data().data() + b * len;
      std::copy(src, src + len, out.begin() + offset);
      offset += len;
    }
  }
  return Tensor::make_result(out_shape, std::move(out), parts,
                             [widths, inner, batch, total](Node& self) {
                               for (int b = 0; b < batch; ++b) {
                                 std::size_t offset = static_cast<std::size_t>(b) * total * inner;
                                 for (std::size_t p = 0; p < widths.size(); ++p) {
                                   const std::size_t len = widths[p] * inner;
                                   if (double* g = parent_grad(self, p)) {
                                     for (std::size_t i = 0; i < len; ++i)
                                       g[b * len + i] += self.grad[offset + i];
                                   }
                                   offset += len;
                                 }
                               }
                             });
}

Tensor crop_patch(const Tensor& x, const std::vector<Cell>& centers, int size) {
  const Dims4 d = image_dims(x, "crop_patch");
  if (size < 1) throw std::invalid_argument("crop_patch: size must be positive");
  if (static_cast<int>(centers.size()) != d.b) {
    throw std::invalid_argument("crop_patch: need one center per batch row");
  }
  const int half = size / 2;
  // source flat index per output element, or npos for padding
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> src(static_cast<std::size_t>(d.b) * d.c * size * size, npos);
  std::vector<double> out(src.size(), 0.0);
  const auto xv = x.data();
  std::size_t o = 0;
  for (int b = 0; b < d.b; ++b)
    for (int c = 0; c < d.c; ++c)
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j, ++o) {
          const int r = centers[b].row - half + i, col = centers[b].col - half + j;
          if (r < 0 || r >= d.h || col < 0 || col >= d.w) continue;
          src[o] = ((static_cast<std::size_t>(b) * d.c + c) * d.h + r) * d.w + col;
          out[o] = xv[src[o]];
        }
  return Tensor::make_result(image_shape(d, d.c, size, size), std::move(out), {x},
                             [src = std::move(src)](Node& self) {
                               double* gx = parent_grad(self, 0);
                               for (std::size_t i = 0; i < src.size(); ++i)
                                 if (src[i] != npos) gx[src[i]] += self.grad[i];
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    double* gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor gather_last(const Tensor& x, const std::vector<int>& index) {
  if (x.rank() < 1) throw std::invalid_argument("gather_last: scalar input");
  const int n = x.dim(-1);
  for (int i : index)
    if (i < 0 || i >= n) throw std::out_of_range("gather_last: index out of range");
  const std::size_t rows = x.numel() / n, m = index.size();
  Shape shape = x.shape();
  shape.back() = static_cast<int>(m);
  std::vector<double> out(rows * m);
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < m; ++i) out[r * m + i] = xv[r * n + index[i]];
  return Tensor::make_result(std::move(shape), std::move(out), {x},
                             [index, rows, n, m](Node& self) {
                               double* gx = parent_grad(self, 0);
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t i = 0; i < m; ++i)
                                   gx[r * n + index[i]] += self.grad[r * m + i];
                             });
}

Tensor fiber_max(const Tensor& x, int fiber) {
  const Dims4 d = image_dims(x, "fiber_max");
  if (fiber < 1 || d.c % fiber != 0) {
    throw std::invalid_argument("fiber_max: channel count not divisible by fiber size");
  }
  const int m = d.c / fiber;
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<double> out(static_cast<std::size_t>(d.b) * m * plane);
  std::vector<std::size_t> arg(out.size());
  const auto xv = x.data();
  for (int b = 0; b < d.b; ++b)
    for (int f = 0; f < m; ++f)
      for (std::size_t p = 0; p < plane; ++p) {
        std::size_t best = ((static_cast<std::size_t>(b) * d.c + f * fiber) * plane) + p;
        for (int j = 1; j < fiber; ++j) {
          const std::size_t i = ((static_cast<std::size_t>(b) * d.c + f * fiber + j) * plane) + p;
          if (xv[i] > xv[best]) best = i;
        }
        const std::size_t o = (static_cast<std::size_t>(b) * m + f) * plane + p;
        out[o] = xv[best];
        arg[o] = best;
      }
  return Tensor::make_result(image_shape(d, m, d.h, d.w), std::move(out), {x},
                             [arg = std::move(arg)](Node& self) {
                               double* gx = parent_grad(self, 0);
                               for (std::size_t i = 0; i < arg.size(); ++i)
                                 gx[arg[i]] += self.grad[i];
                             });
}

Tensor spatial_mean(const Tensor& x) {
  const Dims4 d = image_dims(x, "spatial_mean");
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<double> out(static_cast<std::size_t>(d.b) * d.c);
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += xv[i * plane + p];
    out[i] = acc / static_cast<double>(plane);
  }
  return Tensor::make_result({d.b, d.c}, std::move(out), {x}, [plane](Node& self) {
    double* gx = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double g = self.grad[i] / static_cast<double>(plane);
      for (std::size_t p = 0; p < plane; ++p) gx[i * plane + p] += g;
    }
  });
}

Tensor broadcast_fields(const Tensor& v, int fiber, int height, int width) {
  if (v.rank() != 2) throw std::invalid_argument("broadcast_fields: expected [B,d]");
  const int b = v.dim(0), fields = v.dim(1);
  const std::size_t block = static_cast<std::size_t>(fiber) * height * width;
  std::vector<double> out(static_cast<std::size_t>(b) * fields * block);
  const auto vv = v.data();
  for (std::size_t i = 0; i < vv.size(); ++i)
    std::fill(out.begin() + i * block, out.begin() + (i + 1) * block, vv[i]);
  return Tensor::make_result({b, fields * fiber, height, width}, std::move(out), {v},
                             [block](Node& self) {
                               double* gv = parent_grad(self, 0);
                               const std::size_t n = self.grad.size() / block;
                               for (std::size_t i = 0; i < n; ++i) {
                                 double acc = 0.0;
                                 for (std::size_t j = 0; j < block; ++j) acc += self.grad[i * block + j];
                                 gv[i] += acc;
                               }
                             });
}

Tensor select_rows(const Tensor& x, const std::vector<int>& index) {
  if (x.rank() != 2 || static_cast<int>(index.size()) != x.dim(0)) {
    throw std::invalid_argument("select_rows: need [B,n] and B indices");
  }
  const int b = x.dim(0), n = x.dim(1);
  std::vector<double> out(b);
  for (int r = 0; r < b; ++r) {
    if (index[r] < 0 || index[r] >= n) throw std::out_of_range("select_rows: index");
    out[r] = x.data()[static_cast<std::size_t>(r) * n + index[r]];
  }
  return Tensor::make_result({b}, std::move(out), {x}, [index, n](Node& self) {
    double* gx = parent_grad(self, 0);
    for (std::size_t r = 0; r < index.size(); ++r) gx[r * n + index[r]] += self.grad[r];
  });
}

Tensor where_rows(const std::vector<bool>& take_b, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() < 1 || static_cast<int>(take_b.size()) != a.dim(0)) {
    throw std::invalid_argument("where_rows: shape mismatch");
  }
  const std::size_t row = a.numel() / take_b.size();
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < take_b.size(); ++r) {
    const auto src = take_b[r] ? b.data() : a.data();
    std::copy(src.begin() + r * row, src.begin() + (r + 1) * row, out.begin() + r * row);
  }
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [take_b, row](Node& self) {
    double* ga = parent_grad(self, 0);
    double* gb = parent_grad(self, 1);
    for (std::size_t r = 0; r < take_b.size(); ++r) {
      double* g = take_b[r] ? gb : ga;
      if (!g) continue;
      for (std::size_t i = r * row; i < (r + 1) * row; ++i) g[i] += self.grad[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result({}, {acc}, {x}, [](Node& self) {
    double* g = parent_grad(self, 0);
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

double huber(double error, double delta) {
  const double a = std::abs(error);
  return a <= delta ? 0.5 * error * error : delta * (a - 0.5 * delta);
}

Tensor huber_loss(const Tensor& pred, const std::vector<double>& target,
                  const std::vector<double>& weights, double delta) {
  if (pred.rank() != 1 || target.size() != pred.numel() || weights.size() != pred.numel()) {
    throw std::invalid_argument("huber_loss: pred must be [B] with B targets and weights");
  }
  const std::size_t n = target.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += weights[i] * huber(pred.data()[i] - target[i], delta);
  return Tensor::make_result({}, {acc / static_cast<double>(n)}, {pred},
                             [target, weights, delta, n](Node& self) {
                               double* g = parent_grad(self, 0);
                               const double* p = parent_value(self, 0);
                               for (std::size_t i = 0; i < n; ++i) {
                                 const double e = p[i] - target[i];
                                 const double d = std::abs(e) <= delta ? e : (e > 0 ? delta : -delta);
                                 g[i] += self.grad[0] * weights[i] * d / static_cast<double>(n);
                               }
                             });
}

Tensor huber_loss(const Tensor& pred, const std::vector<double>& target, double delta) {
  return huber_loss(pred, target, std::vector<double>(target.size(), 1.0), delta);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& index) {
  if (logits.rank() != 2 || static_cast<int>(index.size()) != logits.dim(0)) {
    throw std::invalid_argument("cross_entropy: need [B,n] logits and B indices");
  }
  const int b = logits.dim(0), n = logits.dim(1);
  std::vector<double> probs(logits.numel());
  double loss = 0.0;
  for (int r = 0; r < b; ++r) {
    const double* row = logits.data().data() + static_cast<std::size_t>(r) * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(row[i] - mx);
    for (int i = 0; i < n; ++i) probs[static_cast<std::size_t>(r) * n + i] = std::exp(row[i] - mx) / z;
    loss += -(row[index[r]] - mx - std::log(z));
  }
  return Tensor::make_result({}, {loss / b}, {logits},
                             [probs = std::move(probs), index, b, n](Node& self) {
                               double* g = parent_grad(self, 0);
                               for (int r = 0; r < b; ++r)
                                 for (int i = 0; i < n; ++i) {
                                   const std::size_t k = static_cast<std::size_t>(r) * n + i;
                                   g[k] += self.grad[0] * (probs[k] - (i == index[r] ? 1.0 : 0.0)) / b;
                                 }
                             });
}

Tensor strict_margin_loss(const Tensor& q, const std::vector<int>& expert_index,
                          const std::vector<bool>& is_expert, double margin) {
  if (q.rank() != 2 || static_cast<int>(expert_index.size()) != q.dim(0) ||
      is_expert.size() != expert_index.size()) {
    throw std::invalid_argument("strict_margin_loss: need [B,n] values and B labels");
  }
  const int b = q.dim(0), n = q.dim(1);
  const auto qv = q.data();
  double total = 0.0;
  // d loss / d q, precomputed since the penalised set is fixed by the values
  std::vector<double> dq(q.numel(), 0.0);
  for (int r = 0; r < b; ++r) {
    if (!is_expert[r]) continue;
    const int e = expert_index[r];
    if (e < 0 || e >= n) throw std::out_of_range("strict_margin_loss: expert index");
    const double* row = qv.data() + static_cast<std::size_t>(r) * n;
    int count = 0;
    double acc = 0.0;
    for (int a = 0; a < n; ++a) {
      const double l = a == e ? 0.0 : margin;
      if (row[a] > row[e] - l) {
        ++count;
        acc += row[a] + l - row[e];
      }
    }
    if (count == 0) continue;
    total += acc / count;
    for (int a = 0; a < n; ++a) {
      const double l = a == e ? 0.0 : margin;
      if (row[a] > row[e] - l) {
        dq[static_cast<std::size_t>(r) * n + a] += 1.0 / (count * b);
        dq[static_cast<std::size_t>(r) * n + e] -= 1.0 / (count * b);
      }
    }
  }
  return Tensor::make_result({}, {total / b}, {q}, [dq = std::move(dq)](Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < dq.size(); ++i) g[i] += self.grad[0] * dq[i];
  });
}

}  // namespace steerq::ops
