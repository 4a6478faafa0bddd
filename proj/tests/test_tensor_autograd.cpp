#include <doctest.h>

#include "aifc/error.hpp"
#include "aifc/grad_check.hpp"
#include "aifc/kernels.hpp"
#include "aifc/ops.hpp"
#include "support.hpp"

using namespace aifc;
using aifc::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

// Reduces an arbitrary-shaped output to a scalar with fixed random weights so
// every output element contributes a distinct gradient.
Var weighted_sum(Var y, std::uint64_t seed = 77) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, y.tape->constant(random_tensor(y.shape(), rng))));
}

GradCheckResult check_unary(Var (*op)(Var), const Shape& s, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(3);
  return grad_check([op](Tape&, std::span<const Var> in) { return weighted_sum(op(in[0])); },
                    {random_tensor(s, rng, lo, hi)});
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(shape_numel(t.shape()) == t.size());
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  CHECK(t.reshaped({6, 4}).shape() == Shape{6, 4});
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
}

TEST_CASE("conv2d: ones kernel sums a 4x4 window") {
  Tape tape(false);
  Var x = tape.constant(Tensor({1, 1, 4, 4}, 1.0));
  Var w = tape.constant(Tensor({1, 1, 4, 4}, 1.0));
  Var y = ops::conv2d(x, w, Var{}, 4, 0);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.value()[0] == 16.0);
}

TEST_CASE("conv2d: 1x1 identity kernel") {
  std::mt19937_64 rng(1);
  Tape tape(false);
  Tensor xv = random_tensor({2, 3, 5, 6}, rng);
  Tensor wv({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) wv[c * 3 + c] = 1.0;
  Var y = ops::conv2d(tape.constant(xv), tape.constant(wv), Var{}, 1, 0);
  CHECK(y.value().same_values(xv));
}

TEST_CASE("conv2d: output extent and channel mismatch") {
  Tape tape(false);
  Var x = tape.constant(Tensor({1, 3, 8, 8}));
  Var y = ops::conv2d(x, tape.constant(Tensor({4, 3, 4, 4})), Var{}, 2, 1);
  CHECK(y.shape() == Shape{1, 4, 4, 4});
  CHECK_THROWS_AS(ops::conv2d(x, tape.constant(Tensor({4, 2, 4, 4})), Var{}, 2, 1), ShapeError);
  CHECK_THROWS_AS(ops::conv2d(x, tape.constant(Tensor({4, 3, 11, 11})), Var{}, 1, 1), ShapeError);
}

TEST_CASE("conv2d gradients match central differences") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const Tensor w = random_tensor({4, 3, 4, 4}, rng);
  const Tensor b = random_tensor({4}, rng);
  auto r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::conv2d(in[0], in[1], in[2], 2, 1)); },
                      {x, w, b});
  CHECK(r.passed(kGradTol));
  INFO("max relative error " << r.max_rel_error);
}

TEST_CASE("conv_transpose2d: single tap spreads to 2x2 ones") {
  Tape tape(false);
  Var x = tape.constant(Tensor({1, 1, 1, 1}, 1.0));
  Var y = ops::conv_transpose2d(x, tape.constant(Tensor({1, 1, 4, 4}, 1.0)), Var{}, 2, 1);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.value().data()) CHECK(v == 1.0);
}

TEST_CASE("conv_transpose2d: zero input gives zero output") {
  std::mt19937_64 rng(2);
  Tape tape(false);
  Var y = ops::conv_transpose2d(tape.constant(Tensor({1, 3, 4, 4})), tape.constant(random_tensor({3, 2, 4, 4}, rng)),
                                Var{}, 2, 1);
  CHECK(y.shape() == Shape{1, 2, 8, 8});
  CHECK(sum_squares(y.value()) == 0.0);
}

TEST_CASE("conv_transpose2d gradients match central differences") {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  const Tensor w = random_tensor({3, 4, 4, 4}, rng);
  const Tensor b = random_tensor({4}, rng);
  auto r = grad_check(
      [](Tape&, std::span<const Var> in) { return weighted_sum(ops::conv_transpose2d(in[0], in[1], in[2], 2, 1)); },
      {x, w, b});
  CHECK(r.passed(kGradTol));
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  std::mt19937_64 rng(8);
  for (int stride : {1, 2}) {
    Tape tape(false);
    const Tensor x = random_tensor({2, 3, 8, 8}, rng);
    const Tensor w = random_tensor({5, 3, 4, 4}, rng);
    Var cx = ops::conv2d(tape.constant(x), tape.constant(w), Var{}, stride, 1);
    const Tensor y = random_tensor(cx.shape(), rng);
    // conv2d weight [Cout, Cin] doubles as the transposed weight [Cin_t = Cout, Cout_t = Cin].
    Var ty = ops::conv_transpose2d(tape.constant(y), tape.constant(w), Var{}, stride, 1);
    REQUIRE(ty.shape() == x.shape());
    const double lhs = dot(cx.value(), y);
    const double rhs = dot(x, ty.value());
    CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("parallel kernels agree with the serial reference") {
  std::mt19937_64 rng(11);
  struct Case {
    int b, cin, h, w, cout, k, s, p;
  };
  for (const Case c : {Case{1, 3, 17, 13, 5, 3, 1, 1}, Case{2, 8, 16, 16, 12, 4, 2, 1}, Case{1, 16, 8, 8, 7, 1, 1, 0},
                       Case{1, 70, 32, 32, 48, 4, 2, 1}}) {
    const auto g = kernels::ConvGeometry::forward(c.b, c.cin, c.h, c.w, c.cout, c.k, c.k, c.s, c.p);
    const Tensor in = random_tensor({static_cast<int>(g.in_size())}, rng);
    const Tensor w = random_tensor({static_cast<int>(g.weight_size())}, rng);
    const Tensor bias = random_tensor({c.cout}, rng);
    const Tensor go = random_tensor({static_cast<int>(g.out_size())}, rng);
    std::vector<double> o1(g.out_size()), o2(g.out_size());
    kernels::serial::conv2d_forward(g, in.ptr(), w.ptr(), bias.ptr(), o1.data());
    kernels::parallel::conv2d_forward(g, in.ptr(), w.ptr(), bias.ptr(), o2.data());
    double e = 0.0;
    for (std::size_t i = 0; i < o1.size(); ++i) e = std::max(e, std::abs(o1[i] - o2[i]));
    CHECK(e < 1e-12);

    std::vector<double> gi1(g.in_size()), gi2(g.in_size());
    kernels::serial::conv2d_backward_input(g, go.ptr(), w.ptr(), gi1.data());
    kernels::parallel::conv2d_backward_input(g, go.ptr(), w.ptr(), gi2.data());
    e = 0.0;
    for (std::size_t i = 0; i < gi1.size(); ++i) e = std::max(e, std::abs(gi1[i] - gi2[i]));
    CHECK(e < 1e-12);

    std::vector<double> gw1(g.weight_size()), gw2(g.weight_size());
    kernels::serial::conv2d_backward_weight(g, in.ptr(), go.ptr(), gw1.data());
    kernels::parallel::conv2d_backward_weight(g, in.ptr(), go.ptr(), gw2.data());
    e = 0.0;
    for (std::size_t i = 0; i < gw1.size(); ++i) e = std::max(e, std::abs(gw1[i] - gw2[i]));
    CHECK(e < 1e-10);
  }
}

TEST_CASE("parallel gemm agrees with serial gemm, including strided A") {
  std::mt19937_64 rng(12);
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, std::tuple{7, 300, 33}, std::tuple{64, 257, 129}}) {
    const Tensor a = random_tensor({m * k}, rng);
    const Tensor b = random_tensor({k * n}, rng);
    for (bool trans : {false, true}) {
      const std::ptrdiff_t ar = trans ? 1 : k, ac = trans ? m : 1;
      std::vector<double> c1(static_cast<std::size_t>(m) * n, 0.5), c2 = c1;
      kernels::serial::gemm(m, n, k, a.ptr(), ar, ac, b.ptr(), c1.data());
      kernels::parallel::gemm(m, n, k, a.ptr(), ar, ac, b.ptr(), c2.data());
      double e = 0.0;
      for (std::size_t i = 0; i < c1.size(); ++i) e = std::max(e, std::abs(c1[i] - c2[i]));
      CHECK(e < 1e-11);
    }
  }
}

TEST_CASE("softmax and concat basics") {
  Tape tape(false);
  Var s = ops::softmax(tape.constant(Tensor({3}, 0.0)), 0);
  for (double v : s.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  Var c = ops::concat({tape.constant(Tensor({1, 2, 4, 4})), tape.constant(Tensor({1, 3, 4, 4}))}, 1);
  CHECK(c.shape() == Shape{1, 5, 4, 4});
  CHECK_THROWS_AS(ops::concat({tape.constant(Tensor({1, 2, 4, 4})), tape.constant(Tensor({1, 3, 4, 5}))}, 1),
                  ShapeError);
  CHECK_THROWS_AS(ops::add(tape.constant(Tensor({2, 3})), tape.constant(Tensor({3, 2}))), ShapeError);
}

TEST_CASE("grad_check on sum of squares") {
  auto r = grad_check([](Tape&, std::span<const Var> in) { return ops::sum(ops::square(in[0])); },
                      {Tensor({2}, std::vector<double>{1.0, 2.0})});
  CHECK(r.passed(1e-8));
  Tape tape;
  Var x = tape.leaf(Tensor({2}, std::vector<double>{1.0, 2.0}));
  tape.backward(ops::sum(ops::square(x)));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("grad_check declares rounding inapplicable") {
  std::mt19937_64 rng(4);
  auto r = grad_check([](Tape&, std::span<const Var> in) { return ops::sum(ops::ste_round(in[0])); },
                      {random_tensor({4}, rng)});
  CHECK_FALSE(r.applicable);
  CHECK_FALSE(r.passed(1.0));
}

TEST_CASE("grad_check flags non-finite output") {
  auto r = grad_check([](Tape&, std::span<const Var> in) { return ops::sum(ops::log(in[0])); },
                      {Tensor({2}, std::vector<double>{-1.0, 1.0})});
  CHECK_FALSE(r.finite);
  CHECK_FALSE(r.passed(1.0));
}

TEST_CASE("elementwise op gradients") {
  CHECK(check_unary(ops::sigmoid, {2, 3, 4}).passed(kGradTol));
  CHECK(check_unary(ops::exp, {2, 3, 4}).passed(kGradTol));
  CHECK(check_unary(ops::softplus, {2, 3, 4}).passed(kGradTol));
  CHECK(check_unary(ops::tanh, {2, 3, 4}).passed(kGradTol));
  CHECK(check_unary(ops::square, {2, 3, 4}).passed(kGradTol));
  CHECK(check_unary(ops::log, {2, 3, 4}, 0.5, 2.0).passed(kGradTol));
  CHECK(check_unary(ops::abs, {2, 3, 4}, 0.1, 1.0).passed(kGradTol));
  CHECK(check_unary(ops::sum, {2, 3, 4}).passed(kGradTol));
  CHECK(check_unary(ops::mean, {2, 3, 4}).passed(kGradTol));

  std::mt19937_64 rng(9);
  const Tensor a = random_tensor({2, 3, 4, 5}, rng), b = random_tensor({2, 3, 4, 5}, rng);
  const Tensor per_channel = random_tensor({1, 3, 1, 1}, rng);
  for (auto op : {ops::add, ops::sub, ops::mul}) {
    auto r = grad_check([op](Tape&, std::span<const Var> in) { return weighted_sum(op(in[0], in[1])); }, {a, b});
    CHECK(r.passed(kGradTol));
  }
  for (auto op : {ops::add_bcast, ops::mul_bcast}) {
    auto r = grad_check([op](Tape&, std::span<const Var> in) { return weighted_sum(op(in[0], in[1])); },
                        {a, per_channel});
    CHECK(r.passed(kGradTol));
  }
  auto r = grad_check([](Tape&, std::span<const Var> in) { return ops::mse(in[0], in[1]); }, {a, b});
  CHECK(r.passed(kGradTol));
  r = grad_check(
      [](Tape&, std::span<const Var> in) { return weighted_sum(ops::add_scalar(ops::scale(in[0], -1.5), 0.25)); }, {a});
  CHECK(r.passed(kGradTol));
  r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::clamp(in[0], -0.5, 0.5)); },
                 {random_tensor({40}, rng, -0.45, 0.45)});
  CHECK(r.passed(kGradTol));
}

TEST_CASE("matrix and shape op gradients") {
  std::mt19937_64 rng(10);
  auto r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::matmul(in[0], in[1])); },
                      {random_tensor({4, 6}, rng), random_tensor({6, 3}, rng)});
  CHECK(r.passed(kGradTol));
  r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::bmm(in[0], in[1])); },
                 {random_tensor({2, 4, 6}, rng), random_tensor({2, 6, 3}, rng)});
  CHECK(r.passed(kGradTol));
  for (int axis : {0, 1}) {
    r = grad_check([axis](Tape&, std::span<const Var> in) { return weighted_sum(ops::softmax(in[0], axis)); },
                   {random_tensor({5, 7}, rng, -3.0, 3.0)});
    CHECK(r.passed(kGradTol));
  }
  r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::concat({in[0], in[1]}, 1)); },
                 {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 3, 3, 3}, rng)});
  CHECK(r.passed(kGradTol));
  r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::slice(in[0], 1, 1, 3)); },
                 {random_tensor({1, 4, 3, 3}, rng)});
  CHECK(r.passed(kGradTol));
  r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::avg_pool2d(in[0], 2)); },
                 {random_tensor({1, 3, 6, 4}, rng)});
  CHECK(r.passed(kGradTol));
  r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::reshape(in[0], {6, 4})); },
                 {random_tensor({2, 3, 4}, rng)});
  CHECK(r.passed(kGradTol));
  r = grad_check([](Tape&, std::span<const Var> in) { return weighted_sum(ops::permute(in[0], {2, 0, 1})); },
                 {random_tensor({2, 3, 4}, rng)});
  CHECK(r.passed(kGradTol));
}

TEST_CASE("gaussian_bits gradient") {
  std::mt19937_64 rng(13);
  Tensor sigma = random_tensor({30}, rng, 0.2, 3.0);
  auto r = grad_check([](Tape&, std::span<const Var> in) { return ops::sum(ops::gaussian_bits(in[0], in[1])); },
                      {random_tensor({30}, rng, -4.0, 4.0), sigma});
  CHECK(r.passed(kGradTol));
}

TEST_CASE("tape records each node once and clears") {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, 1.0));
  Var y = ops::add(x, x);  // x reached twice through one node
  Var z = ops::sum(ops::mul(y, x));
  tape.backward(z);
  // z = sum(2 x^2) -> dz/dx = 4x
  for (double g : x.grad().data()) CHECK(g == 4.0);
  CHECK(tape.size() > 0);
  tape.clear();
  CHECK(tape.size() == 0);
}

TEST_CASE("forward evaluation is deterministic") {
  std::mt19937_64 rng(14);
  const Tensor x = random_tensor({1, 8, 32, 32}, rng);
  const Tensor w = random_tensor({16, 8, 4, 4}, rng);
  Tape t1(false), t2(false);
  Var a = ops::conv2d(t1.constant(x), t1.constant(w), Var{}, 2, 1);
  Var b = ops::conv2d(t2.constant(x), t2.constant(w), Var{}, 2, 1);
  CHECK(a.value().same_values(b.value()));
}
