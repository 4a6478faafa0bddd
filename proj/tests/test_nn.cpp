#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "aifc/error.hpp"
#include "aifc/grad_check.hpp"
#include "aifc/nn.hpp"
#include "aifc/ops.hpp"
#include "support.hpp"

using namespace aifc;
using aifc::testing::param_grad_error;
using aifc::testing::random_tensor;

namespace {

Var weighted_sum(Var y, std::uint64_t seed = 21) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, y.tape->constant(random_tensor(y.shape(), rng))));
}

void randomize(ParameterStore& store, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  for (Parameter& p : store.all()) p.value = random_tensor(p.value.shape(), rng, -scale, scale);
}

}  // namespace

TEST_CASE("adaptive activation closed forms") {
  ParameterStore store;
  nn::AdaptiveActivation act(store, "act", 3);
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({1, 3, 4, 4}, rng, -3.0, 3.0);
  act.gain().value.fill(0.0);
  act.shift().value.fill(0.0);
  Tape tape(false);
  Var y = act(tape, tape.constant(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == doctest::Approx(x[i] / 2.0).epsilon(1e-15));

  act.gain().value.fill(1.3);
  act.shift().value.fill(-0.4);
  Var z = act(tape, tape.constant(Tensor({1, 3, 4, 4})));
  CHECK(sum_squares(z.value()) == 0.0);
  CHECK_THROWS_AS(act(tape, tape.constant(Tensor({1, 4, 2, 2}))), ShapeError);
}

TEST_CASE("adaptive activation is monotone for non-negative gain") {
  ParameterStore store;
  nn::AdaptiveActivation act(store, "act", 4);
  const double gains[4] = {0.0, 0.5, 1.0, 3.0};
  const double shifts[4] = {0.0, -1.0, 2.0, 0.3};
  for (int c = 0; c < 4; ++c) {
    act.gain().value[c] = gains[c];
    act.shift().value[c] = shifts[c];
  }
  // With a > 0 the gate has a minimum at negative x (the swish dip), so the
  // dense sweep checks x >= 0 on every channel and the full range for a = 0.
  const int n = 4001;
  Tensor x({1, 4, 1, n});
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < n; ++i) x.at(0, c, 0, i) = -20.0 + 40.0 * i / (n - 1);
  Tape tape(false);
  const Tensor y = act(tape, tape.constant(x)).value();
  for (int c = 0; c < 4; ++c) {
    int decreases = 0;
    for (int i = 1; i < n; ++i)
      if (x.at(0, c, 0, i) >= 0.0 && y.at(0, c, 0, i) < y.at(0, c, 0, i - 1)) ++decreases;
    CHECK(decreases == 0);
  }
  // a = 0: y = x sigmoid(b) is linear with positive slope over the whole range.
  for (int i = 1; i < n; ++i) CHECK(y.at(0, 0, 0, i) > y.at(0, 0, 0, i - 1));
}

TEST_CASE("adaptive activation gradients") {
  ParameterStore store;
  nn::AdaptiveActivation act(store, "act", 3);
  randomize(store, 2);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({1, 3, 5, 5}, rng);
  auto r = grad_check([&](Tape& t, std::span<const Var> in) { return weighted_sum(act(t, in[0])); }, {x});
  CHECK(r.passed(1e-4));
  CHECK(param_grad_error(store, [&](Tape& t) { return weighted_sum(act(t, t.constant(x))); }) < 1e-4);
}

TEST_CASE("residual block is the identity at initialization") {
  ParameterStore store(4);
  nn::ResidualBlock block(store, "res", 6);
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({1, 6, 8, 8}, rng);
  Tape tape(false);
  CHECK(block(tape, tape.constant(x)).value().same_values(x));
}

TEST_CASE("residual block gradients") {
  ParameterStore store(6);
  nn::ResidualBlock block(store, "res", 3);
  randomize(store, 7, 0.5);
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({1, 3, 6, 6}, rng);
  auto r = grad_check([&](Tape& t, std::span<const Var> in) { return weighted_sum(block(t, in[0])); }, {x});
  CHECK(r.passed(1e-4));
  CHECK(param_grad_error(store, [&](Tape& t) { return weighted_sum(block(t, t.constant(x))); }) < 1e-4);
}

TEST_CASE("attention with zero output projection is the identity") {
  ParameterStore store(9);
  nn::AttentionBlock att(store, "att", 4, 2);
  std::mt19937_64 rng(10);
  const Tensor q = random_tensor({1, 4, 8, 8}, rng);
  const Tensor kv = random_tensor({1, 4, 8, 8}, rng);
  Tape tape(false);
  CHECK(att(tape, tape.constant(q), tape.constant(kv)).value().same_values(q));
}

TEST_CASE("attention rows sum to one and output keeps the query shape") {
  ParameterStore store(11);
  nn::AttentionBlock att(store, "att", 4, 2);
  randomize(store, 12);
  std::mt19937_64 rng(13);
  Tape tape(false);
  nn::AttentionTrace trace;
  Var out = att(tape, tape.constant(random_tensor({1, 4, 8, 8}, rng)), tape.constant(random_tensor({1, 4, 8, 8}, rng)),
                &trace);
  CHECK(out.shape() == Shape{1, 4, 8, 8});
  REQUIRE(trace.weights.shape() == Shape{64, 16});
  double worst = 0.0;
  for (int q = 0; q < 64; ++q) {
    double s = 0.0;
    for (int t = 0; t < 16; ++t) s += trace.weights[q * 16 + t];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("attention over a spatially constant key/value map adds a constant") {
  ParameterStore store(14);
  nn::AttentionBlock att(store, "att", 3, 2);
  randomize(store, 15);
  std::mt19937_64 rng(16);
  Tensor kv({1, 3, 8, 8});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 64; ++i) kv[c * 64 + i] = 0.3 * (c + 1);
  Tape tape(false);
  Var delta = att.attend(tape, tape.constant(random_tensor({1, 3, 8, 8}, rng)), tape.constant(kv));
  for (int c = 0; c < 3; ++c)
    for (int i = 1; i < 64; ++i) CHECK(delta.value()[c * 64 + i] == doctest::Approx(delta.value()[c * 64]).epsilon(1e-12));
}

TEST_CASE("attention is invariant to key/value token order") {
  ParameterStore store(17);
  nn::AttentionBlock att(store, "att", 4, 1);
  randomize(store, 18);
  std::mt19937_64 rng(19);
  const Tensor q = random_tensor({4, 10}, rng);
  const Tensor kv = random_tensor({4, 12}, rng);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor kv_perm({4, 12});
  for (int c = 0; c < 4; ++c)
    for (int t = 0; t < 12; ++t) kv_perm[c * 12 + t] = kv[c * 12 + perm[t]];
  Tape tape(false);
  const Tensor a = att.attend_tokens(tape, tape.constant(q), tape.constant(kv)).value();
  const Tensor b = att.attend_tokens(tape, tape.constant(q), tape.constant(kv_perm)).value();
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("attention rejects non-divisible key/value extents") {
  ParameterStore store;
  nn::AttentionBlock att(store, "att", 2, 2);
  Tape tape(false);
  CHECK_THROWS_AS(att(tape, tape.constant(Tensor({1, 2, 4, 4})), tape.constant(Tensor({1, 2, 5, 4}))), ShapeError);
}

TEST_CASE("attention gradients") {
  ParameterStore store(20);
  nn::AttentionBlock att(store, "att", 3, 2);
  randomize(store, 21);
  std::mt19937_64 rng(22);
  const Tensor q = random_tensor({1, 3, 4, 4}, rng);
  const Tensor kv = random_tensor({1, 3, 4, 4}, rng);
  auto r = grad_check([&](Tape& t, std::span<const Var> in) { return weighted_sum(att(t, in[0], in[1])); }, {q, kv});
  CHECK(r.passed(1e-4));
  CHECK(param_grad_error(store, [&](Tape& t) { return weighted_sum(att(t, t.constant(q), t.constant(kv))); }) < 1e-4);
}

TEST_CASE("conv stack gradients") {
  ParameterStore store(23);
  nn::Conv2d c1(store, "c1", 3, 4, 4, 2, 1);
  nn::AdaptiveActivation a1(store, "a1", 4);
  nn::ConvTranspose2d t1(store, "t1", 4, 2, 4, 2, 1);
  randomize(store, 24, 0.5);
  std::mt19937_64 rng(25);
  const Tensor x = random_tensor({1, 3, 8, 8}, rng);
  auto f = [&](Tape& t, Var in) { return weighted_sum(t1(t, a1(t, c1(t, in)))); };
  auto r = grad_check([&](Tape& t, std::span<const Var> in) { return f(t, in[0]); }, {x});
  CHECK(r.passed(1e-4));
  CHECK(param_grad_error(store, [&](Tape& t) { return f(t, t.constant(x)); }) < 1e-4);
}
