#pragma once

// Differentiable operations over Tape/Var. Shapes follow the BCHW convention;
// broadcasting is limited to same-rank operands whose extents are 1 or equal
// (scalar and per-channel cases).

#include <vector>

#include "aifc/autograd.hpp"

namespace aifc::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_bcast(Var x, Var b);
Var mul_bcast(Var x, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);

Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var softplus(Var x);
Var tanh(Var x);
Var abs(Var x);
Var square(Var x);
Var clamp_min(Var x, double lo);
Var clamp(Var x, double lo, double hi);

Var sum(Var x);
Var mean(Var x);
Var mse(Var a, Var b);

Var matmul(Var a, Var b);  // [M,K] x [K,N]
Var bmm(Var a, Var b);     // [B,M,K] x [B,K,N]
Var softmax(Var x, int axis);
Var concat(const std::vector<Var>& xs, int axis);
Var slice(Var x, int axis, int begin, int end);
Var avg_pool2d(Var x, int k);
Var reshape(Var x, Shape shape);
Var permute(Var x, const std::vector<int>& dims);

// weight [Cout,Cin,kh,kw]; bias optional ([Cout]).
Var conv2d(Var x, Var weight, Var bias, int stride, int padding);
// weight [Cin,Cout,kh,kw]; output extent (H-1)*stride - 2*padding + kh.
Var conv_transpose2d(Var x, Var weight, Var bias, int stride, int padding);

// Rounds half away from zero; gradient passes straight through. Marks the
// tape as containing a non-differentiable op.
Var ste_round(Var x);

// Per-element -log2 P(r) for P = N(0, sigma^2) convolved with U(-1/2, 1/2),
// with P clamped below at 2^-40 (zero gradient where clamped).
Var gaussian_bits(Var r, Var sigma);
// -log2(max(p, 2^-40)).
Var neg_log2_clamped(Var p);

inline constexpr double kLikelihoodFloor = 9.094947017729282e-13;  // 2^-40

}  // namespace aifc::ops
