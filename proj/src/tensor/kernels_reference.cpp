#include <stdexcept>
#include <string>

#include "steerq/kernels.hpp"

namespace steerq::kernels {

std::size_t ConvGeometry::input_size() const {
  return static_cast<std::size_t>(batch) * in_channels * height * width;
}

std::size_t ConvGeometry::output_size() const {
  return static_cast<std::size_t>(batch) * out_channels * out_height() * out_width();
}

std::size_t ConvGeometry::kernel_size() const {
  return static_cast<std::size_t>(per_sample_kernel ? batch : 1) * out_channels * in_channels *
         kernel * kernel;
}

void ConvGeometry::validate() const {
  if (batch < 1 || in_channels < 1 || out_channels < 1 || height < 1 || width < 1) {
    throw std::invalid_argument("conv2d: non-positive dimension");
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel size must be odd, got " + std::to_string(kernel));
  }
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride or padding");
  const int span_h = height + 2 * pad - kernel;
  const int span_w = width + 2 * pad - kernel;
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
    throw std::invalid_argument("conv2d: output size is not integral");
  }
}

namespace reference {

namespace {
const double* kernel_for(const ConvGeometry& g, const double* w, int b) {
  return g.per_sample_kernel
             ? w + static_cast<std::size_t>(b) * g.out_channels * g.in_channels * g.kernel * g.kernel
             : w;
}
}  // namespace

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* y) {
  g.validate();
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int b = 0; b < g.batch; ++b) {
    const double* wb = kernel_for(g, w, b);
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride + kx - g.pad;
                if (ix < 0 || ix >= g.width) continue;
                acc += wb[((co * g.in_channels + ci) * k + ky) * k + kx] *
                       x[((static_cast<std::size_t>(b) * g.in_channels + ci) * g.height + iy) *
                             g.width + ix];
              }
            }
          }
          y[((static_cast<std::size_t>(b) * g.out_channels + co) * ho + oy) * wo + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* w, const double* gy, double* gx) {
  g.validate();
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int b = 0; b < g.batch; ++b) {
    const double* wb = kernel_for(g, w, b);
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const double go =
              gy[((static_cast<std::size_t>(b) * g.out_channels + co) * ho + oy) * wo + ox];
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride + kx - g.pad;
                if (ix < 0 || ix >= g.width) continue;
                gx[((static_cast<std::size_t>(b) * g.in_channels + ci) * g.height + iy) * g.width +
                   ix] += wb[((co * g.in_channels + ci) * k + ky) * k + kx] * go;
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* gy, double* gw) {
  g.validate();
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int b = 0; b < g.batch; ++b) {
    double* gwb = g.per_sample_kernel
                      ? gw + static_cast<std::size_t>(b) * g.out_channels * g.in_channels * k * k
                      : gw;
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const double go =
              gy[((static_cast<std::size_t>(b) * g.out_channels + co) * ho + oy) * wo + ox];
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride + kx - g.pad;
                if (ix < 0 || ix >= g.width) continue;
                gwb[((co * g.in_channels + ci) * k + ky) * k + kx] +=
                    go * x[((static_cast<std::size_t>(b) * g.in_channels + ci) * g.height + iy) *
                               g.width + ix];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace reference
}  // namespace steerq::kernels
