#pragma once

#include <cmath>
#include <random>

#include "aifc/tensor.hpp"

namespace aifc::testing {

inline Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Standard normal CDF from the Maclaurin series of erf; accurate to ~1e-15
// for |x| <= 3, used as an oracle independent of std::erf/erfc. Larger
// arguments go through the continued fraction below.
inline double erf_series(double x) {
  double term = x;
  double sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const double add = term / (2 * n + 1);
    sum += add;
    if (std::abs(add) < 1e-18) break;
  }
  return sum * 2.0 / std::sqrt(M_PI);
}

// erfc(x) for x > 3 from its continued fraction, evaluated bottom-up.
inline double erfc_fraction(double x) {
  double t = x;
  for (int n = 300; n >= 1; --n) t = x + (n / 2.0) / t;
  return std::exp(-x * x) / std::sqrt(M_PI) / t;
}

inline double erf_oracle(double x) {
  if (x > 3.0) return 1.0 - erfc_fraction(x);
  if (x < -3.0) return erfc_fraction(-x) - 1.0;
  return erf_series(x);
}

inline double gaussian_pmf_oracle(double r, double sigma) {
  const double a = (r - 0.5) / (sigma * std::sqrt(2.0));
  const double b = (r + 0.5) / (sigma * std::sqrt(2.0));
  // Both ends in the same tail: difference of erfc values keeps precision.
  if (a > 3.0) return 0.5 * (erfc_fraction(a) - erfc_fraction(b));
  if (b < -3.0) return 0.5 * (erfc_fraction(-b) - erfc_fraction(-a));
  return 0.5 * (erf_oracle(b) - erf_oracle(a));
}

}  // namespace aifc::testing

#include <functional>

#include "aifc/autograd.hpp"
#include "aifc/param.hpp"

namespace aifc::testing {

// Finite-difference check over every element of every parameter in `store`
// (or the first `limit` elements of each when limit > 0). Same error metric
// as grad_check.
inline double param_grad_error(ParameterStore& store, const std::function<Var(Tape&)>& f, double h = 1e-5,
                               std::size_t limit = 0) {
  store.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  auto eval = [&] {
    Tape tape(false);
    return f(tape).value()[0];
  };
  double worst = 0.0;
  for (Parameter& p : store.all()) {
    const std::size_t n = limit ? std::min(limit, p.value.size()) : p.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double keep = p.value[i];
      p.value[i] = keep + h;
      const double up = eval();
      p.value[i] = keep - h;
      const double down = eval();
      p.value[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad[i];
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) return INFINITY;
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
    }
  }
  return worst;
}

}  // namespace aifc::testing
