#include <doctest.h>

#include <cmath>

#include "aifc/entropy.hpp"
#include "aifc/error.hpp"
#include "aifc/grad_check.hpp"
#include "aifc/ops.hpp"
#include "support.hpp"

using namespace aifc;
using namespace aifc::entropy;
using aifc::testing::gaussian_pmf_oracle;
using aifc::testing::param_grad_error;
using aifc::testing::random_tensor;

TEST_CASE("quantize examples") {
  CHECK(quantize_residual(1.4, 0.0) == 1);
  CHECK(quantize_residual(0.7, 0.7) == 0);
  CHECK(quantize_residual(2.5, 0.0) == 3);
  CHECK(quantize_residual(-2.5, 0.0) == -3);
  CHECK(quantize_residual(0.5, 0.0) == 1);
  CHECK(quantize_residual(-0.5, 0.0) == -1);
  const Quantized q = quantize(Tensor({1}, 1.4), Tensor({1}, 0.0));
  CHECK(q.residual[0] == 1);
  CHECK(q.reconstruction[0] == 1.0);
  CHECK_THROWS_AS(quantize(Tensor({1}, NAN), Tensor({1}, 0.0)), InvalidArgument);
  CHECK_THROWS_AS(quantize(Tensor({2}), Tensor({1})), ShapeError);
}

TEST_CASE("quantize keeps reconstruction within half a step and is idempotent") {
  std::mt19937_64 rng(1);
  const Tensor y = random_tensor({1000000}, rng, -10.0, 10.0);
  const Tensor mu = random_tensor({1000000}, rng, -10.0, 10.0);
  const Quantized q = quantize(y, mu);
  double worst = 0.0;
  bool idempotent = true;
  for (std::size_t i = 0; i < y.size(); ++i) {
    worst = std::max(worst, std::abs(q.reconstruction[i] - y[i]));
    idempotent &= quantize_residual(q.reconstruction[i], mu[i]) == q.residual[i];
  }
  CHECK(worst <= 0.5);
  CHECK(idempotent);
}

TEST_CASE("noise quantization") {
  std::mt19937_64 rng(2);
  const Tensor y = random_tensor({1, 2, 3, 3}, rng, -3.0, 3.0);
  const Tensor mu = random_tensor({1, 2, 3, 3}, rng, -3.0, 3.0);
  {
    Tape tape;
    Var yv = tape.leaf(y);
    RelaxedResidual r = noise_quantize(yv, tape.constant(mu), Tensor(y.shape()));
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(r.rate_input.value()[i] == y[i] - mu[i]);
      CHECK(r.reconstruction.value()[i] == mu[i] + std::round(y[i] - mu[i]));
    }
    tape.backward(ops::sum(r.rate_input));
    for (double g : yv.grad().data()) CHECK(g == 1.0);
  }
  // Mean-zero noise: the sample mean of the relaxed residual sits within 3
  // standard errors of y - mu.
  const int n = 100000;
  Tape tape(false);
  Var yv = tape.constant(Tensor({n}, 0.3));
  Var mv = tape.constant(Tensor({n}, 0.0));
  std::mt19937_64 noise_rng(3);
  RelaxedResidual r = noise_quantize(yv, mv, noise_rng);
  double mean = 0.0;
  for (double v : r.rate_input.value().data()) mean += v;
  mean /= n;
  CHECK(std::abs(mean - 0.3) < 3.0 * std::sqrt(1.0 / 12.0 / n));
  for (double v : r.rate_input.value().data()) CHECK((v >= -0.2 && v < 0.8));
}

TEST_CASE("gaussian pmf against an erf series oracle") {
  CHECK(std::abs(gaussian_pmf(0.0, 1.0) - gaussian_pmf_oracle(0.0, 1.0)) < 1e-9);
  CHECK(std::abs(gaussian_pmf(0.0, 1.0) - 0.382925) < 1e-6);
  for (double sigma : {0.04, 0.3, 1.0, 2.5}) {
    for (int r = -4; r <= 4; ++r) {
      CHECK(std::abs(gaussian_pmf(r, sigma) - gaussian_pmf_oracle(r, sigma)) < 1e-9);
      CHECK(gaussian_pmf(r, sigma) == gaussian_pmf(-r, sigma));
    }
  }
}

TEST_CASE("gaussian pmf sums to one") {
  for (double sigma : {0.04, 0.5, 1.0, 7.0, 40.0}) {
    const int lim = static_cast<int>(std::ceil(40.0 * sigma));
    double s = 0.0;
    for (int r = -lim; r <= lim; ++r) s += gaussian_pmf(r, sigma);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("rate of a single symbol") {
  GaussianConditional gc;
  const std::int64_t r[1] = {0};
  const double s[1] = {1.0};
  const RateEstimate est = gc.rate(r, s);
  CHECK(est.bits == doctest::Approx(-std::log2(0.382925)).epsilon(1e-5));
  CHECK(std::abs(est.bits + std::log2(gaussian_pmf_oracle(0.0, 1.0))) < 1e-9);
  // -log2(0.382925) = 1.38487, quoted elsewhere as 1.3850.
  CHECK(std::abs(est.bits - 1.3850) < 2e-4);
  CHECK(est.underflow == 0);
}

TEST_CASE("rate of zero residuals grows with sigma like log2 sigma") {
  GaussianConditional gc;
  const std::int64_t r[1] = {0};
  double prev = -1.0;
  for (double sigma = 1.0; sigma <= 4096.0; sigma *= 2.0) {
    const double s[1] = {sigma};
    const double bits = gc.rate(r, s).bits;
    CHECK(bits > prev);
    if (sigma >= 8.0) CHECK(bits - prev == doctest::Approx(1.0).epsilon(0.01));
    prev = bits;
  }
}

TEST_CASE("rate underflow is clamped and flagged") {
  GaussianConditional gc;
  const std::int64_t r[1] = {100};
  const double s[1] = {0.04};
  const RateEstimate est = gc.rate(r, s);
  CHECK(est.underflow == 1);
  CHECK(est.bits == 40.0);
}

TEST_CASE("uniform 4-symbol table costs exactly two bits per symbol") {
  const double p[4] = {0.25, 0.25, 0.25, 0.25};
  // Four equal frequencies plus the mandatory escape slot.
  const CdfTable t = quantize_pmf(0, p, 0.0);
  for (int v = 0; v < 4; ++v) CHECK(table_bits(t, v) == doctest::Approx(2.0).epsilon(1e-3));
  CdfTable exact{0, {0, 16384, 32768, 49152, 65535, 65536}};
  CHECK(table_bits(exact, 0) == 2.0);
  CHECK(table_bits(exact, 1) == 2.0);
}

TEST_CASE("gaussian cdf table invariants") {
  GaussianConditional gc;
  SUBCASE("sigma at the floor puts nearly all mass at zero") {
    const CdfTable t = gc.table(0.04);
    const int zero = static_cast<int>(-t.min_symbol);
    CHECK(t.freq(zero) >= 65536.0 * (1.0 - 1.0 / 256.0));
  }
  for (double sigma : {0.04, 0.11, 1.0, 3.7, 25.0, 300.0}) {
    const CdfTable t = gc.table(sigma);
    CHECK(t.cdf.front() == 0);
    CHECK(t.cdf.back() == kCdfTotal);
    for (std::size_t i = 0; i + 1 < t.cdf.size(); ++i) CHECK(t.cdf[i + 1] > t.cdf[i]);
    // Reconstructed pmf is within one quantum plus the tail share of the real pmf.
    double worst = 0.0;
    for (std::int64_t v = t.min_symbol; v <= t.max_symbol(); ++v) {
      const double q = t.freq(static_cast<int>(v - t.min_symbol)) / 65536.0;
      worst = std::max(worst, std::abs(q - gaussian_pmf(static_cast<double>(v), sigma)));
    }
    CHECK(worst <= 1.0 / 65536.0 + 1.0 / 512.0);
    CHECK(gc.table(sigma) == t);  // rebuilt independently on the decoder side
    CHECK(gaussian_pmf(t.min_symbol - 1, sigma) < 1.0 / 1024.0);
  }
}

TEST_CASE("gaussian support overflow") {
  GaussianConditional gc;
  CHECK_THROWS_AS(gc.table(1e5), SupportOverflowError);
  CHECK_THROWS_AS(gc.table(NAN), InvalidArgument);
  CHECK(gc.floor(0.001) == 0.04);
  CHECK(gc.floor(0.5) == 0.5);
}

TEST_CASE("escape coding round-trips extreme values") {
  GaussianConditional gc;
  const CdfTable t = gc.table(1.0);
  const std::vector<std::int64_t> values{0, 3, -3, t.max_symbol(), t.max_symbol() + 1, t.min_symbol - 1, 1000, -70000,
                                         std::int64_t{1} << 40, -(std::int64_t{1} << 50)};
  RangeEncoder enc;
  for (auto v : values) encode_value(enc, t, v);
  const auto bytes = enc.finish();
  RangeDecoder dec(bytes);
  for (auto v : values) CHECK(decode_value(dec, t) == v);
}

TEST_CASE("estimated rate matches coded length on model-drawn symbols") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> us(0.04, 6.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  GaussianConditional gc;
  RangeEncoder enc;
  std::vector<std::int64_t> rs;
  std::vector<double> ss;
  for (int i = 0; i < 10000; ++i) {
    const double sigma = us(rng);
    // r = round(sigma * n + u) is distributed as N(0, sigma^2) * U(-1/2, 1/2) discretized.
    const double u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    const std::int64_t r = static_cast<std::int64_t>(std::round(sigma * nd(rng) + u));
    rs.push_back(r);
    ss.push_back(sigma);
    encode_value(enc, gc.table(sigma), r);
  }
  const double actual = 8.0 * static_cast<double>(enc.finish().size());
  const double est = gc.rate(rs, ss).bits;
  CHECK(std::abs(est - actual) <= 0.01 * est + 64.0);
}

TEST_CASE("factorized model is a valid distribution per channel") {
  ParameterStore store(5);
  FactorizedModel fm(store, "fm", 4);
  std::mt19937_64 rng(6);
  for (Parameter& p : store.all()) {
    const Tensor noise = random_tensor(p.value.shape(), rng, -0.5, 0.5);
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += noise[i];
  }
  for (int c = 0; c < 4; ++c) {
    CHECK(fm.cdf(c, -1e6) < 1e-6);
    CHECK(fm.cdf(c, 1e6) > 1.0 - 1e-6);
    double prev = 0.0;
    for (double x = -50.0; x <= 50.0; x += 0.05) {
      const double v = fm.cdf(c, x);
      CHECK(v >= prev);
      prev = v;
    }
    int lim = 1;
    while (fm.cdf(c, -lim - 0.5) > 1e-9 || 1.0 - fm.cdf(c, lim + 0.5) > 1e-9) lim *= 2;
    double s = 0.0;
    bool nonneg = true;
    for (int n = -lim; n <= lim; ++n) {
      const double p = fm.pmf(c, n);
      nonneg &= p >= 0.0;
      s += p;
    }
    CHECK(nonneg);
    CHECK(std::abs(s - 1.0) < 1e-6);

    const CdfTable t = fm.table(c);
    for (std::size_t i = 0; i + 1 < t.cdf.size(); ++i) CHECK(t.cdf[i + 1] > t.cdf[i]);
    CHECK(fm.table(c) == t);
  }
}

TEST_CASE("factorized likelihood agrees with the scalar path and has correct gradients") {
  ParameterStore store(7);
  FactorizedModel fm(store, "fm", 2);
  std::mt19937_64 rng(8);
  for (Parameter& p : store.all()) p.value = random_tensor(p.value.shape(), rng, -1.0, 1.0);
  const Tensor z = random_tensor({1, 2, 2, 3}, rng, -3.0, 3.0);
  Tape tape(false);
  const Tensor lik = fm.likelihood(tape, tape.constant(z)).value();
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i) CHECK(lik[c * 6 + i] == doctest::Approx(fm.pmf(c, z[c * 6 + i])).epsilon(1e-12));

  auto r = grad_check([&](Tape& t, std::span<const Var> in) { return ops::sum(fm.bits(t, in[0])); }, {z});
  CHECK(r.passed(1e-4));
  CHECK(param_grad_error(store, [&](Tape& t) { return ops::sum(fm.bits(t, t.constant(z))); }) < 1e-4);
}

TEST_CASE("segments partition the channel axis") {
  auto segs = split_segments(32, 8);
  REQUIRE(segs.size() == 8);
  CHECK(segs.front().begin == 0);
  CHECK(segs.back().end == 32);
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) CHECK(segs[i].end == segs[i + 1].begin);
  for (const auto& s : segs) CHECK(s.size() == 4);
  auto odd = split_segments(10, 4);
  CHECK(odd[0].size() == 3);
  CHECK(odd[3].size() == 2);
  CHECK_THROWS_AS(split_segments(3, 4), InvalidArgument);

  LatentCode code{4, 2, 2, std::vector<std::int64_t>(16), split_segments(4, 2), LatentOrigin::kMain};
  CHECK_NOTHROW(code.validate());
  code.segments[1].begin = 3;
  CHECK_THROWS(code.validate());
}
