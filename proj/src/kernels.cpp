#include "aifc/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "aifc/error.hpp"

namespace aifc::kernels {

ConvGeometry ConvGeometry::forward(int batch, int cin, int h, int w, int cout, int kh, int kw, int stride,
                                   int padding) {
  if (stride < 1) throw InvalidArgument("convolution stride must be >= 1");
  if (padding < 0) throw InvalidArgument("convolution padding must be >= 0");
  if (h + 2 * padding < kh || w + 2 * padding < kw)
    throw ShapeError("convolution kernel larger than padded input");
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = cin;
  g.in_h = h;
  g.in_w = w;
  g.out_channels = cout;
  g.kernel_h = kh;
  g.kernel_w = kw;
  g.stride = stride;
  g.padding = padding;
  g.out_h = (h + 2 * padding - kh) / stride + 1;
  g.out_w = (w + 2 * padding - kw) / stride + 1;
  return g;
}

ConvGeometry ConvGeometry::transposed(int batch, int cin_t, int h, int w, int cout_t, int kh, int kw, int stride,
                                      int padding) {
  if (stride < 1) throw InvalidArgument("transposed convolution stride must be >= 1");
  const int out_h = (h - 1) * stride - 2 * padding + kh;
  const int out_w = (w - 1) * stride - 2 * padding + kw;
  if (out_h < 1 || out_w < 1) throw ShapeError("transposed convolution produces an empty output");
  ConvGeometry g = forward(batch, cout_t, out_h, out_w, cin_t, kh, kw, stride, padding);
  if (g.out_h != h || g.out_w != w) throw ShapeError("transposed convolution geometry is not invertible");
  return g;
}

void add_channel_bias(int batch, int channels, int plane, const double* bias, double* out) {
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      double* o = out + (static_cast<std::size_t>(b) * channels + c) * plane;
      const double v = bias[c];
      for (int i = 0; i < plane; ++i) o[i] += v;
    }
}

void reduce_channel_bias(int batch, int channels, int plane, const double* grad, double* grad_bias) {
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c) {
      const double* g = grad + (static_cast<std::size_t>(b) * channels + c) * plane;
      double s = 0.0;
      for (int i = 0; i < plane; ++i) s += g[i];
      grad_bias[c] += s;
    }
}

// ---------------------------------------------------------------------------
// serial reference

namespace serial {

void gemm(int m, int n, int k, const double* a, std::ptrdiff_t a_row, std::ptrdiff_t a_col, const double* b,
          double* c) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[i * a_row + p * a_col] * b[static_cast<std::size_t>(p) * n + j];
      c[static_cast<std::size_t>(i) * n + j] += s;
    }
}

void conv2d_forward(const ConvGeometry& g, const double* in, const double* w, const double* bias, double* out) {
  for (int b = 0; b < g.batch; ++b)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          double s = bias ? bias[co] : 0.0;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < g.kernel_h; ++ky) {
              const int iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int ix = ox * g.stride - g.padding + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                s += in[((static_cast<std::size_t>(b) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] *
                     w[((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          out[((static_cast<std::size_t>(b) * g.out_channels + co) * g.out_h + oy) * g.out_w + ox] = s;
        }
}

void conv2d_backward_input(const ConvGeometry& g, const double* grad_out, const double* w, double* grad_in) {
  for (int b = 0; b < g.batch; ++b)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          const double go =
              grad_out[((static_cast<std::size_t>(b) * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < g.kernel_h; ++ky) {
              const int iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int ix = ox * g.stride - g.padding + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                grad_in[((static_cast<std::size_t>(b) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] +=
                    go * w[((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
        }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out, double* grad_w) {
  for (int co = 0; co < g.out_channels; ++co)
    for (int ci = 0; ci < g.in_channels; ++ci)
      for (int ky = 0; ky < g.kernel_h; ++ky)
        for (int kx = 0; kx < g.kernel_w; ++kx) {
          double s = 0.0;
          for (int b = 0; b < g.batch; ++b)
            for (int oy = 0; oy < g.out_h; ++oy) {
              const int iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int ox = 0; ox < g.out_w; ++ox) {
                const int ix = ox * g.stride - g.padding + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                s += in[((static_cast<std::size_t>(b) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] *
                     grad_out[((static_cast<std::size_t>(b) * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
              }
            }
          grad_w[((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] += s;
        }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels

namespace parallel {
namespace {

constexpr int kRowBlock = 4;
constexpr int kColBlock = 256;
constexpr std::size_t kMinParallelWork = 1 << 15;

// Rows [m0, m0+4) x columns [n0, n0+nb) of C, accumulated over the full k range.
void tile4(int m0, int n0, int nb, int n, int k, const double* a, std::ptrdiff_t a_row, std::ptrdiff_t a_col,
           const double* b, double* c) {
  double* __restrict c0 = c + static_cast<std::size_t>(m0) * n + n0;
  double* __restrict c1 = c0 + n;
  double* __restrict c2 = c1 + n;
  double* __restrict c3 = c2 + n;
  const double* ar = a + m0 * a_row;
  for (int p = 0; p < k; ++p) {
    const double a0 = ar[p * a_col];
    const double a1 = ar[a_row + p * a_col];
    const double a2 = ar[2 * a_row + p * a_col];
    const double a3 = ar[3 * a_row + p * a_col];
    const double* __restrict bp = b + static_cast<std::size_t>(p) * n + n0;
    for (int j = 0; j < nb; ++j) {
      const double bv = bp[j];
      c0[j] += a0 * bv;
      c1[j] += a1 * bv;
      c2[j] += a2 * bv;
      c3[j] += a3 * bv;
    }
  }
}

void tile1(int m, int n0, int nb, int n, int k, const double* a, std::ptrdiff_t a_row, std::ptrdiff_t a_col,
           const double* b, double* c) {
  double* __restrict cr = c + static_cast<std::size_t>(m) * n + n0;
  const double* ar = a + m * a_row;
  for (int p = 0; p < k; ++p) {
    const double av = ar[p * a_col];
    const double* __restrict bp = b + static_cast<std::size_t>(p) * n + n0;
    for (int j = 0; j < nb; ++j) cr[j] += av * bp[j];
  }
}

void im2col(const ConvGeometry& g, const double* in, double* cols) {
  const int plane = g.out_h * g.out_w;
  const int kk = g.kernel_h * g.kernel_w;
  const bool big = static_cast<std::size_t>(g.in_channels) * kk * plane > kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (int ci = 0; ci < g.in_channels; ++ci) {
    const double* src = in + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky)
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        double* dst = cols + (static_cast<std::size_t>(ci) * kk + ky * g.kernel_w + kx) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          double* row = dst + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(row, row + g.out_w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            row[ox] = (ix >= 0 && ix < g.in_w) ? srow[ix] : 0.0;
          }
        }
      }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* in) {
  const int plane = g.out_h * g.out_w;
  const int kk = g.kernel_h * g.kernel_w;
  const bool big = static_cast<std::size_t>(g.in_channels) * kk * plane > kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (int ci = 0; ci < g.in_channels; ++ci) {
    double* dst = in + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky)
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const double* src = cols + (static_cast<std::size_t>(ci) * kk + ky * g.kernel_w + kx) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          double* drow = dst + static_cast<std::size_t>(iy) * g.in_w;
          const double* srow = src + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.in_w) drow[ix] += srow[ox];
          }
        }
      }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

// dst[N,K] = src[K,N]^T
void transpose(int rows, int cols, const double* src, double* dst) {
  constexpr int kT = 32;
  for (int r0 = 0; r0 < rows; r0 += kT)
    for (int c0 = 0; c0 < cols; c0 += kT) {
      const int r1 = std::min(rows, r0 + kT), c1 = std::min(cols, c0 + kT);
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
    }
}

}  // namespace

void gemm(int m, int n, int k, const double* a, std::ptrdiff_t a_row, std::ptrdiff_t a_col, const double* b,
          double* c) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  const int row_blocks = (m + kRowBlock - 1) / kRowBlock;
  const int col_blocks = (n + kColBlock - 1) / kColBlock;
  const int tiles = row_blocks * col_blocks;
  const bool big = static_cast<std::size_t>(m) * n * k > kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (int t = 0; t < tiles; ++t) {
    const int rb = t / col_blocks;
    const int cb = t % col_blocks;
    const int m0 = rb * kRowBlock;
    const int n0 = cb * kColBlock;
    const int nb = std::min(kColBlock, n - n0);
    if (m0 + kRowBlock <= m) {
      tile4(m0, n0, nb, n, k, a, a_row, a_col, b, c);
    } else {
      for (int r = m0; r < m; ++r) tile1(r, n0, nb, n, k, a, a_row, a_col, b, c);
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const double* in, const double* w, const double* bias, double* out) {
  const int plane = g.out_h * g.out_w;
  const int kdim = g.in_channels * g.kernel_h * g.kernel_w;
  const bool pointwise = is_pointwise(g);
  std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
  for (int b = 0; b < g.batch; ++b) {
    const double* in_b = in + static_cast<std::size_t>(b) * g.in_channels * g.in_h * g.in_w;
    double* out_b = out + static_cast<std::size_t>(b) * g.out_channels * plane;
    std::fill(out_b, out_b + static_cast<std::size_t>(g.out_channels) * plane, 0.0);
    const double* src = in_b;
    if (!pointwise) {
      im2col(g, in_b, cols.data());
      src = cols.data();
    }
    gemm(g.out_channels, plane, kdim, w, kdim, 1, src, out_b);
  }
  if (bias) add_channel_bias(g.batch, g.out_channels, plane, bias, out);
}

void conv2d_backward_input(const ConvGeometry& g, const double* grad_out, const double* w, double* grad_in) {
  const int plane = g.out_h * g.out_w;
  const int kdim = g.in_channels * g.kernel_h * g.kernel_w;
  const bool pointwise = is_pointwise(g);
  std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
  for (int b = 0; b < g.batch; ++b) {
    const double* go_b = grad_out + static_cast<std::size_t>(b) * g.out_channels * plane;
    double* gi_b = grad_in + static_cast<std::size_t>(b) * g.in_channels * g.in_h * g.in_w;
    if (pointwise) {
      gemm(kdim, plane, g.out_channels, w, 1, kdim, go_b, gi_b);
      continue;
    }
    std::fill(cols.begin(), cols.end(), 0.0);
    gemm(kdim, plane, g.out_channels, w, 1, kdim, go_b, cols.data());
    col2im_add(g, cols.data(), gi_b);
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out, double* grad_w) {
  const int plane = g.out_h * g.out_w;
  const int kdim = g.in_channels * g.kernel_h * g.kernel_w;
  const bool pointwise = is_pointwise(g);
  std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
  std::vector<double> cols_t(static_cast<std::size_t>(kdim) * plane);
  for (int b = 0; b < g.batch; ++b) {
    const double* in_b = in + static_cast<std::size_t>(b) * g.in_channels * g.in_h * g.in_w;
    const double* go_b = grad_out + static_cast<std::size_t>(b) * g.out_channels * plane;
    const double* src = in_b;
    if (!pointwise) {
      im2col(g, in_b, cols.data());
      src = cols.data();
    }
    transpose(kdim, plane, src, cols_t.data());
    gemm(g.out_channels, kdim, plane, go_b, plane, 1, cols_t.data(), grad_w);
  }
}

}  // namespace parallel
}  // namespace aifc::kernels
