#include "aifc/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "aifc/error.hpp"
#include "aifc/kernels.hpp"

namespace aifc::ops {
namespace {

namespace kn = kernels::parallel;

void check_same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape != b.tape) throw InvalidArgument("operands must live on the same tape");
}

void check_same_shape(const char* op, Var a, Var b) {
  check_same_tape(a, b);
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// y = f(x) elementwise; dy/dx computed from (x, y).
template <class F, class D>
Var unary(Var x, F f, D deriv, bool differentiable = true) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  const int xi = x.id;
  Tape& t = *x.tape;
  const int yi = static_cast<int>(t.size());
  return t.push(
      std::move(y), {xi},
      [xi, yi, deriv](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value(xi);
        const Tensor& yv = tp.value(yi);
        Tensor& gx = tp.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
      },
      differentiable);
}

struct Bcast {
  std::array<int, 4> x{1, 1, 1, 1};
  std::array<std::size_t, 4> bstride{0, 0, 0, 0};
};

Bcast make_bcast(const Shape& xs, const Shape& bs) {
  if (xs.size() != bs.size() || xs.size() > 4)
    throw ShapeError("broadcast requires equal ranks <= 4: " + shape_str(xs) + " vs " + shape_str(bs));
  Bcast r;
  const std::size_t off = 4 - xs.size();
  std::array<int, 4> b{1, 1, 1, 1};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (bs[i] != 1 && bs[i] != xs[i]) throw ShapeError("not broadcast-compatible: " + shape_str(xs) + " vs " + shape_str(bs));
    r.x[off + i] = xs[i];
    b[off + i] = bs[i];
  }
  std::size_t s = 1;
  for (int i = 3; i >= 0; --i) {
    r.bstride[i] = b[i] == 1 ? 0 : s;
    s *= b[i];
  }
  return r;
}

template <class F>
void for_bcast(const Bcast& bc, F f) {
  std::size_t xi = 0;
  for (int i0 = 0; i0 < bc.x[0]; ++i0)
    for (int i1 = 0; i1 < bc.x[1]; ++i1)
      for (int i2 = 0; i2 < bc.x[2]; ++i2) {
        const std::size_t base = i0 * bc.bstride[0] + i1 * bc.bstride[1] + i2 * bc.bstride[2];
        for (int i3 = 0; i3 < bc.x[3]; ++i3) f(xi++, base + i3 * bc.bstride[3]);
      }
}

int norm_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("axis out of range");
  return axis;
}

// outer x axis x inner decomposition around `axis`.
void split_axis(const Shape& s, int axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

inline double phi(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }
inline double big_phi(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

}  // namespace

Var add(Var a, Var b) {
  check_same_shape("add", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
    t.accumulate(ai, g);
    t.accumulate(bi, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape("sub", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
    t.accumulate(ai, g);
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_shape("mul", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var add_bcast(Var x, Var b) {
  check_same_tape(x, b);
  const Bcast bc = make_bcast(x.shape(), b.shape());
  Tensor y = x.value();
  const Tensor& bv = b.value();
  for_bcast(bc, [&](std::size_t i, std::size_t j) { y[i] += bv[j]; });
  const int xi = x.id, bi = b.id;
  return x.tape->push(std::move(y), {xi, bi}, [xi, bi, bc](Tape& t, const Tensor& g) {
    t.accumulate(xi, g);
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for_bcast(bc, [&](std::size_t i, std::size_t j) { gb[j] += g[i]; });
    }
  });
}

Var mul_bcast(Var x, Var b) {
  check_same_tape(x, b);
  const Bcast bc = make_bcast(x.shape(), b.shape());
  Tensor y = x.value();
  const Tensor& bv = b.value();
  for_bcast(bc, [&](std::size_t i, std::size_t j) { y[i] *= bv[j]; });
  const int xi = x.id, bi = b.id;
  return x.tape->push(std::move(y), {xi, bi}, [xi, bi, bc](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(xi);
    const Tensor& bv = t.value(bi);
    if (t.requires_grad(xi)) {
      Tensor& gx = t.grad_buffer(xi);
      for_bcast(bc, [&](std::size_t i, std::size_t j) { gx[i] += g[i] * bv[j]; });
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for_bcast(bc, [&](std::size_t i, std::size_t j) { gb[j] += g[i] * xv[i]; });
    }
  });
}

Var scale(Var x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(Var x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var softplus(Var x) {
  return unary(
      x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(Var x) {
  return unary(x, [](double v) { return std::abs(v); }, [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp_min(Var x, double lo) {
  return unary(x, [lo](double v) { return std::max(v, lo); }, [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Var ste_round(Var x) {
  return unary(
      x, [](double v) { return std::round(v); }, [](double, double) { return 1.0; }, /*differentiable=*/false);
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const int xi = x.id;
  return x.tape->push(Tensor({1}, s), {xi}, [xi](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor y({m, n});
  kn::gemm(m, n, k, a.value().ptr(), k, 1, b.value().ptr(), y.ptr());
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {ai, bi}, [ai, bi, m, n, k](Tape& t, const Tensor& g) {
    if (t.requires_grad(ai)) {
      // ga[M,K] += g[M,N] * b^T
      const Tensor& bv = t.value(bi);
      Tensor bt({n, k});
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) bt[static_cast<std::size_t>(j) * k + p] = bv[static_cast<std::size_t>(p) * n + j];
      kn::gemm(m, k, n, g.ptr(), n, 1, bt.ptr(), t.grad_buffer(ai).ptr());
    }
    if (t.requires_grad(bi)) {
      // gb[K,N] += a^T * g
      kn::gemm(k, n, m, t.value(ai).ptr(), 1, k, g.ptr(), t.grad_buffer(bi).ptr());
    }
  });
}

Var bmm(Var a, Var b) {
  check_same_tape(a, b);
  if (a.value().rank() != 3 || b.value().rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor y({batch, m, n});
  for (int i = 0; i < batch; ++i)
    kn::gemm(m, n, k, a.value().ptr() + static_cast<std::size_t>(i) * m * k, k, 1,
             b.value().ptr() + static_cast<std::size_t>(i) * k * n, y.ptr() + static_cast<std::size_t>(i) * m * n);
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {ai, bi}, [ai, bi, batch, m, n, k](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    for (int i = 0; i < batch; ++i) {
      const double* gi = g.ptr() + static_cast<std::size_t>(i) * m * n;
      if (t.requires_grad(ai)) {
        Tensor bt({n, k});
        const double* bp = bv.ptr() + static_cast<std::size_t>(i) * k * n;
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < n; ++j) bt[static_cast<std::size_t>(j) * k + p] = bp[static_cast<std::size_t>(p) * n + j];
        kn::gemm(m, k, n, gi, n, 1, bt.ptr(), t.grad_buffer(ai).ptr() + static_cast<std::size_t>(i) * m * k);
      }
      if (t.requires_grad(bi))
        kn::gemm(k, n, m, av.ptr() + static_cast<std::size_t>(i) * m * k, 1, k, gi,
                 t.grad_buffer(bi).ptr() + static_cast<std::size_t>(i) * k * n);
    }
  });
}

Var softmax(Var x, int axis) {
  const Shape& s = x.shape();
  axis = norm_axis(axis, static_cast<int>(s.size()));
  std::size_t outer, inner;
  split_axis(s, axis, outer, inner);
  const int n = s[axis];
  const Tensor& xv = x.value();
  Tensor y(s);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -INFINITY;
      for (int i = 0; i < n; ++i) mx = std::max(mx, xv[base + i * inner]);
      double z = 0.0;
      for (int i = 0; i < n; ++i) {
        const double e = std::exp(xv[base + i * inner] - mx);
        y[base + i * inner] = e;
        z += e;
      }
      for (int i = 0; i < n; ++i) y[base + i * inner] /= z;
    }
  const int xi = x.id;
  const int yi = static_cast<int>(x.tape->size());
  return x.tape->push(std::move(y), {xi}, [xi, yi, outer, inner, n](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(yi);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double d = 0.0;
        for (int i = 0; i < n; ++i) d += g[base + i * inner] * yv[base + i * inner];
        for (int i = 0; i < n; ++i) gx[base + i * inner] += yv[base + i * inner] * (g[base + i * inner] - d);
      }
  });
}

Var concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw InvalidArgument("concat of nothing");
  const Shape& s0 = xs[0].shape();
  axis = norm_axis(axis, static_cast<int>(s0.size()));
  Shape out = s0;
  out[axis] = 0;
  std::vector<int> ids;
  std::vector<int> extents;
  for (const Var& v : xs) {
    check_same_tape(xs[0], v);
    const Shape& s = v.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != s0[i])
        throw ShapeError("concat: " + shape_str(s0) + " vs " + shape_str(s));
    out[axis] += s[axis];
    ids.push_back(v.id);
    extents.push_back(s[axis]);
  }
  std::size_t outer, inner;
  split_axis(out, axis, outer, inner);
  const int total = out[axis];
  Tensor y(out);
  int offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& xv = xs[k].value();
    const std::size_t chunk = static_cast<std::size_t>(extents[k]) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(xv.ptr() + o * chunk, chunk, y.ptr() + (o * total + offset) * inner);
    offset += extents[k];
  }
  return xs[0].tape->push(std::move(y), ids, [ids, extents, outer, inner, total](Tape& t, const Tensor& g) {
    int offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t chunk = static_cast<std::size_t>(extents[k]) * inner;
      if (t.requires_grad(ids[k])) {
        Tensor& gx = t.grad_buffer(ids[k]);
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = g.ptr() + (o * total + offset) * inner;
          double* dst = gx.ptr() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += extents[k];
    }
  });
}

Var slice(Var x, int axis, int begin, int end) {
  const Shape& s = x.shape();
  axis = norm_axis(axis, static_cast<int>(s.size()));
  if (begin < 0 || end > s[axis] || begin >= end)
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " + shape_str(s));
  std::size_t outer, inner;
  split_axis(s, axis, outer, inner);
  Shape out = s;
  out[axis] = end - begin;
  const int total = s[axis];
  const std::size_t chunk = static_cast<std::size_t>(end - begin) * inner;
  Tensor y(out);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.ptr() + (o * total + begin) * inner, chunk, y.ptr() + o * chunk);
  const int xi = x.id;
  return x.tape->push(std::move(y), {xi}, [xi, outer, inner, total, begin, chunk](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t o = 0; o < outer; ++o) {
      double* dst = gx.ptr() + (o * total + begin) * inner;
      const double* src = g.ptr() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Var avg_pool2d(Var x, int k) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("avg_pool2d expects BCHW");
  if (k < 1 || s[2] % k || s[3] % k)
    throw ShapeError("avg_pool2d: extents " + shape_str(s) + " not divisible by " + std::to_string(k));
  const int planes = s[0] * s[1], h = s[2], w = s[3], ho = h / k, wo = w / k;
  const double inv = 1.0 / (k * k);
  Tensor y({s[0], s[1], ho, wo});
  const Tensor& xv = x.value();
  for (int p = 0; p < planes; ++p)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx)
            acc += xv[(static_cast<std::size_t>(p) * h + oy * k + dy) * w + ox * k + dx];
        y[(static_cast<std::size_t>(p) * ho + oy) * wo + ox] = acc * inv;
      }
  const int xi = x.id;
  return x.tape->push(std::move(y), {xi}, [xi, planes, h, w, ho, wo, k, inv](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (int p = 0; p < planes; ++p)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const double v = g[(static_cast<std::size_t>(p) * ho + oy) * wo + ox] * inv;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) gx[(static_cast<std::size_t>(p) * h + oy * k + dy) * w + ox * k + dx] += v;
        }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  const int xi = x.id;
  return x.tape->push(std::move(y), {xi}, [xi](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var permute(Var x, const std::vector<int>& dims) {
  const Shape& s = x.shape();
  const int r = static_cast<int>(s.size());
  if (static_cast<int>(dims.size()) != r) throw ShapeError("permute: wrong number of axes");
  std::vector<int> seen(r, 0);
  for (int d : dims) {
    if (d < 0 || d >= r || seen[d]++) throw ShapeError("permute: invalid axis list");
  }
  Shape out(r);
  for (int i = 0; i < r; ++i) out[i] = s[dims[i]];
  std::vector<std::size_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * s[i + 1];
  // Source offset for each destination element, in destination order.
  const std::size_t n = shape_numel(s);
  std::vector<std::size_t> src(n);
  std::vector<int> idx(r, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t off = 0;
    for (int i = 0; i < r; ++i) off += idx[i] * in_stride[dims[i]];
    src[o] = off;
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  Tensor y(out);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < n; ++o) y[o] = xv[src[o]];
  const int xi = x.id;
  return x.tape->push(std::move(y), {xi}, [xi, src = std::move(src)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t o = 0; o < src.size(); ++o) gx[src[o]] += g[o];
  });
}

Var conv2d(Var x, Var weight, Var bias, int stride, int padding) {
  check_same_tape(x, weight);
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4) throw ShapeError("conv2d expects 4-D input and weight");
  if (xs[1] != ws[1])
    throw ShapeError("conv2d: input channels " + std::to_string(xs[1]) + " != weight channels " + std::to_string(ws[1]));
  if (bias.valid() && (bias.value().size() != static_cast<std::size_t>(ws[0])))
    throw ShapeError("conv2d: bias length mismatch");
  const auto g = kernels::ConvGeometry::forward(xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, padding);
  Tensor y({g.batch, g.out_channels, g.out_h, g.out_w});
  kn::conv2d_forward(g, x.value().ptr(), weight.value().ptr(), bias.valid() ? bias.value().ptr() : nullptr, y.ptr());
  const int xi = x.id, wi = weight.id, bi = bias.valid() ? bias.id : -1;
  return x.tape->push(std::move(y), {xi, wi, bi}, [g, xi, wi, bi](Tape& t, const Tensor& go) {
    if (t.requires_grad(xi)) kn::conv2d_backward_input(g, go.ptr(), t.value(wi).ptr(), t.grad_buffer(xi).ptr());
    if (t.requires_grad(wi)) kn::conv2d_backward_weight(g, t.value(xi).ptr(), go.ptr(), t.grad_buffer(wi).ptr());
    if (bi >= 0 && t.requires_grad(bi))
      kernels::reduce_channel_bias(g.batch, g.out_channels, g.out_h * g.out_w, go.ptr(), t.grad_buffer(bi).ptr());
  });
}

Var conv_transpose2d(Var x, Var weight, Var bias, int stride, int padding) {
  check_same_tape(x, weight);
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4) throw ShapeError("conv_transpose2d expects 4-D input and weight");
  if (xs[1] != ws[0])
    throw ShapeError("conv_transpose2d: input channels " + std::to_string(xs[1]) + " != weight rows " +
                     std::to_string(ws[0]));
  if (bias.valid() && (bias.value().size() != static_cast<std::size_t>(ws[1])))
    throw ShapeError("conv_transpose2d: bias length mismatch");
  // Forward geometry maps the transposed output (X side) onto x (Y side).
  const auto g = kernels::ConvGeometry::transposed(xs[0], xs[1], xs[2], xs[3], ws[1], ws[2], ws[3], stride, padding);
  Tensor y({g.batch, g.in_channels, g.in_h, g.in_w});
  kn::conv2d_backward_input(g, x.value().ptr(), weight.value().ptr(), y.ptr());
  if (bias.valid()) kernels::add_channel_bias(g.batch, g.in_channels, g.in_h * g.in_w, bias.value().ptr(), y.ptr());
  const int xi = x.id, wi = weight.id, bi = bias.valid() ? bias.id : -1;
  return x.tape->push(std::move(y), {xi, wi, bi}, [g, xi, wi, bi](Tape& t, const Tensor& go) {
    if (t.requires_grad(xi)) {
      Tensor gx(t.value(xi).shape());
      kn::conv2d_forward(g, go.ptr(), t.value(wi).ptr(), nullptr, gx.ptr());
      t.accumulate(xi, gx);
    }
    if (t.requires_grad(wi)) kn::conv2d_backward_weight(g, go.ptr(), t.value(xi).ptr(), t.grad_buffer(wi).ptr());
    if (bi >= 0 && t.requires_grad(bi))
      kernels::reduce_channel_bias(g.batch, g.in_channels, g.in_h * g.in_w, go.ptr(), t.grad_buffer(bi).ptr());
  });
}

Var gaussian_bits(Var r, Var sigma) {
  check_same_shape("gaussian_bits", r, sigma);
  const Tensor& rv = r.value();
  const Tensor& sv = sigma.value();
  const std::size_t n = rv.size();
  Tensor y(rv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(rv[i]);
    const double s = sv[i];
    const double p = big_phi((0.5 - a) / s) - big_phi((-0.5 - a) / s);
    y[i] = -std::log2(std::max(p, kLikelihoodFloor));
  }
  const int ri = r.id, si = sigma.id;
  return r.tape->push(std::move(y), {ri, si}, [ri, si, n](Tape& t, const Tensor& g) {
    const Tensor& rv = t.value(ri);
    const Tensor& sv = t.value(si);
    Tensor* gr = t.requires_grad(ri) ? &t.grad_buffer(ri) : nullptr;
    Tensor* gs = t.requires_grad(si) ? &t.grad_buffer(si) : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::abs(rv[i]);
      const double s = sv[i];
      const double u = (0.5 - a) / s;
      const double l = (-0.5 - a) / s;
      const double p = big_phi(u) - big_phi(l);
      if (p < kLikelihoodFloor) continue;
      const double dbits_dp = -1.0 / (p * std::numbers::ln2);
      if (gr) {
        const double dp_da = -(phi(u) - phi(l)) / s;
        const double sign = rv[i] > 0 ? 1.0 : (rv[i] < 0 ? -1.0 : 0.0);
        (*gr)[i] += g[i] * dbits_dp * dp_da * sign;
      }
      if (gs) {
        const double dp_ds = (-u * phi(u) + l * phi(l)) / s;
        (*gs)[i] += g[i] * dbits_dp * dp_ds;
      }
    }
  });
}

Var neg_log2_clamped(Var p) {
  return unary(
      p, [](double v) { return -std::log2(std::max(v, kLikelihoodFloor)); },
      [](double v, double) { return v > kLikelihoodFloor ? -1.0 / (v * std::numbers::ln2) : 0.0; });
}

}  // namespace aifc::ops
