#pragma once

// Convolution and matrix kernels.
//
// Two implementations share one interface:
//   serial::   direct loops, kept as the reference the tests compare against.
//   parallel:: im2col + blocked GEMM, OpenMP over independent output rows.
//
// In the parallel kernels every output element is produced by exactly one
// thread with a fixed accumulation order, so results are bit-identical for
// any thread count.

#include <cstddef>

namespace aifc::kernels {

// Geometry of a forward convolution X[B,Cin,H,W] (*) W[Cout,Cin,kh,kw] -> Y[B,Cout,Ho,Wo].
// A transposed convolution reuses the same geometry with the roles of X and Y swapped.
struct ConvGeometry {
  int batch = 1;
  int in_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;
  int out_h = 0;
  int out_w = 0;

  static ConvGeometry forward(int batch, int cin, int h, int w, int cout, int kh, int kw, int stride, int padding);
  // Geometry whose *input* side is the transposed-conv output (H' = (h-1)s - 2p + k).
  static ConvGeometry transposed(int batch, int cin_t, int h, int w, int cout_t, int kh, int kw, int stride,
                                 int padding);

  std::size_t in_size() const { return static_cast<std::size_t>(batch) * in_channels * in_h * in_w; }
  std::size_t out_size() const { return static_cast<std::size_t>(batch) * out_channels * out_h * out_w; }
  std::size_t weight_size() const { return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w; }
};

// C[M,N] += A[M,K] * B[K,N]. A is addressed as A[m*a_row + k*a_col] so a
// transposed operand needs no copy. B and C are dense row-major.
namespace serial {
void gemm(int m, int n, int k, const double* a, std::ptrdiff_t a_row, std::ptrdiff_t a_col, const double* b,
          double* c);
// out = conv(in, w) (+ bias if non-null). out is overwritten.
void conv2d_forward(const ConvGeometry& g, const double* in, const double* w, const double* bias, double* out);
// grad_in += conv2d^T(grad_out, w)
void conv2d_backward_input(const ConvGeometry& g, const double* grad_out, const double* w, double* grad_in);
// grad_w += correlation(in, grad_out)
void conv2d_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out, double* grad_w);
}  // namespace serial

namespace parallel {
void gemm(int m, int n, int k, const double* a, std::ptrdiff_t a_row, std::ptrdiff_t a_col, const double* b,
          double* c);
void conv2d_forward(const ConvGeometry& g, const double* in, const double* w, const double* bias, double* out);
void conv2d_backward_input(const ConvGeometry& g, const double* grad_out, const double* w, double* grad_in);
void conv2d_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out, double* grad_w);
}  // namespace parallel

// Adds bias[c] to every element of channel c of a BCHW buffer.
void add_channel_bias(int batch, int channels, int plane, const double* bias, double* out);
// grad_bias[c] += sum of grad over channel c.
void reduce_channel_bias(int batch, int channels, int plane, const double* grad, double* grad_bias);

}  // namespace aifc::kernels
