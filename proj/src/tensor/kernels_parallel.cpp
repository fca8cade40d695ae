#include <vector>

#include "steerq/kernels.hpp"

namespace steerq::kernels::parallel {

namespace {

std::size_t col_rows(const ConvGeometry& g) {
  return static_cast<std::size_t>(g.in_channels) * g.kernel * g.kernel;
}

std::size_t col_cols(const ConvGeometry& g) {
  return static_cast<std::size_t>(g.out_height()) * g.out_width();
}

std::size_t kernel_stride(const ConvGeometry& g) {
  return g.per_sample_kernel ? col_rows(g) * g.out_channels : 0;
}

// col[(ci*k + ky)*k + kx][oy*wo + ox] = x[ci][oy*s + ky - p][ox*s + kx - p]
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    const double* xc = x + static_cast<std::size_t>(ci) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          double* out = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= g.height) {
            for (int ox = 0; ox < wo; ++ox) out[ox] = 0.0;
            continue;
          }
          const double* in = xc + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            out[ox] = (ix >= 0 && ix < g.width) ? in[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* gx) {
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    double* gc = gx + static_cast<std::size_t>(ci) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.height) continue;
          double* out = gc + static_cast<std::size_t>(iy) * g.width;
          const double* in = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.width) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

// y[m x n] = a[m x kk] * b[kk x n]
void gemm_nn(std::size_t m, std::size_t kk, std::size_t n, const double* a, const double* b,
             double* y) {
  for (std::size_t i = 0; i < m; ++i) {
    double* yr = y + i * n;
    for (std::size_t j = 0; j < n; ++j) yr[j] = 0.0;
    for (std::size_t p = 0; p < kk; ++p) {
      const double av = a[i * kk + p];
      const double* br = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) yr[j] += av * br[j];
    }
  }
}

// y[kk x n] = a^T * b with a[m x kk], b[m x n]
void gemm_tn(std::size_t m, std::size_t kk, std::size_t n, const double* a, const double* b,
             double* y) {
  for (std::size_t idx = 0; idx < kk * n; ++idx) y[idx] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* br = b + i * n;
    for (std::size_t p = 0; p < kk; ++p) {
      const double av = a[i * kk + p];
      double* yr = y + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) yr[j] += av * br[j];
    }
  }
}

// y[m x kk] += a[m x n] * b[kk x n]^T
void gemm_nt_add(std::size_t m, std::size_t kk, std::size_t n, const double* a, const double* b,
                 double* y) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * n;
    for (std::size_t p = 0; p < kk; ++p) {
      const double* br = b + p * n;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < n; ++j) acc += ar[j] * br[j];
      y[i * kk + p] += acc;
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* y) {
  g.validate();
  const std::size_t rows = col_rows(g), cols = col_cols(g);
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * cols;
#pragma omp parallel
  {
    std::vector<double> col(rows * cols);
#pragma omp for schedule(static)
    for (int b = 0; b < g.batch; ++b) {
      im2col(g, x + b * in_stride, col.data());
      gemm_nn(g.out_channels, rows, cols, w + b * kernel_stride(g), col.data(),
              y + b * out_stride);
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* w, const double* gy, double* gx) {
  g.validate();
  const std::size_t rows = col_rows(g), cols = col_cols(g);
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * cols;
#pragma omp parallel
  {
    std::vector<double> col(rows * cols);
#pragma omp for schedule(static)
    for (int b = 0; b < g.batch; ++b) {
      gemm_tn(g.out_channels, rows, cols, w + b * kernel_stride(g), gy + b * out_stride,
              col.data());
      col2im_add(g, col.data(), gx + b * in_stride);
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* gy, double* gw) {
  g.validate();
  const std::size_t rows = col_rows(g), cols = col_cols(g);
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * cols;
  if (g.per_sample_kernel) {
#pragma omp parallel
    {
      std::vector<double> col(rows * cols);
#pragma omp for schedule(static)
      for (int b = 0; b < g.batch; ++b) {
        im2col(g, x + b * in_stride, col.data());
        gemm_nt_add(g.out_channels, rows, cols, gy + b * out_stride, col.data(),
                    gw + b * kernel_stride(g));
      }
    }
    return;
  }
  // shared kernel: each output channel row of gw is owned by one thread and
  // summed over the batch in order
  std::vector<double> cols_all(static_cast<std::size_t>(g.batch) * rows * cols);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < g.batch; ++b) im2col(g, x + b * in_stride, cols_all.data() + b * rows * cols);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < g.out_channels; ++co) {
    for (int b = 0; b < g.batch; ++b) {
      gemm_nt_add(1, rows, cols, gy + b * out_stride + static_cast<std::size_t>(co) * cols,
                  cols_all.data() + b * rows * cols, gw + static_cast<std::size_t>(co) * rows);
    }
  }
}

}  // namespace steerq::kernels::parallel
