#pragma once

// 2-D cross-correlation kernels over NCHW float64 buffers.
//
// Two implementations with identical contracts:
//   reference::  direct seven-loop serial code, kept as the test oracle;
//   parallel::   im2col + row-major GEMM, OpenMP over independent outputs.
// Both are bitwise deterministic for a fixed thread count; the parallel
// version is also independent of the thread count because every output
// element is reduced in a fixed order by exactly one thread.
//
// Forward overwrites its output. Backward functions accumulate (+=).

#include <cstddef>

namespace steerq::kernels {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int out_channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  /// Kernel tensor is [batch, out, in, k, k] instead of [out, in, k, k].
  bool per_sample_kernel = false;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t kernel_size() const;
  /// Throws std::invalid_argument on inconsistent geometry.
  void validate() const;
};

namespace reference {
void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* y);
void conv2d_backward_input(const ConvGeometry& g, const double* w, const double* gy, double* gx);
void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* gy, double* gw);
}  // namespace reference

namespace parallel {
void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* y);
void conv2d_backward_input(const ConvGeometry& g, const double* w, const double* gy, double* gx);
void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* gy, double* gw);
}  // namespace parallel

}  // namespace steerq::kernels
