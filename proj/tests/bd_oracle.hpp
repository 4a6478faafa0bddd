#pragma once

// Independent BD-rate reference: natural cubic spline assembled as a dense
// linear system solved by Gaussian elimination, integrated with a fine
// trapezoid rule.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "aifc/metrics.hpp"

namespace aifc::testing {

class DenseSpline {
 public:
  DenseSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const int n = static_cast<int>(x_.size());
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    a[0][0] = 1.0;
    a[n - 1][n - 1] = 1.0;
    for (int i = 1; i + 1 < n; ++i) {
      const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
      a[i][i - 1] = h0 / 6.0;
      a[i][i] = (h0 + h1) / 3.0;
      a[i][i + 1] = h1 / 6.0;
      a[i][n] = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
    }
    for (int c = 0; c < n; ++c) {
      int piv = c;
      for (int r = c + 1; r < n; ++r)
        if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
      std::swap(a[c], a[piv]);
      for (int r = 0; r < n; ++r) {
        if (r == c) continue;
        const double f = a[r][c] / a[c][c];
        for (int k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
      }
    }
    m_.resize(n);
    for (int i = 0; i < n; ++i) m_[i] = a[i][n] / a[i][i];
  }

  double operator()(double t) const {
    int i = 0;
    while (i + 2 < static_cast<int>(x_.size()) && t > x_[i + 1]) ++i;
    const double h = x_[i + 1] - x_[i];
    const double a = (x_[i + 1] - t) / h, b = (t - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
  }

 private:
  std::vector<double> x_, y_, m_;
};

inline double trapezoid(const DenseSpline& s, double lo, double hi, int n = 10000) {
  const double h = (hi - lo) / n;
  double acc = 0.5 * (s(lo) + s(hi));
  for (int i = 1; i < n; ++i) acc += s(lo + i * h);
  return acc * h;
}

inline double bd_rate_oracle(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test) {
  auto curve = [](const std::vector<RDPoint>& pts) {
    std::vector<double> x, y;
    for (const auto& p : pts) {
      x.push_back(p.psnr_db);
      y.push_back(std::log(p.bpp));
    }
    return DenseSpline(x, y);
  };
  const double lo = std::max(anchor.front().psnr_db, test.front().psnr_db);
  const double hi = std::min(anchor.back().psnr_db, test.back().psnr_db);
  const double diff = (trapezoid(curve(test), lo, hi) - trapezoid(curve(anchor), lo, hi)) / (hi - lo);
  return (std::exp(diff) - 1.0) * 100.0;
}

// Monotone RD curve: PSNR and rate both strictly increasing.
inline std::vector<RDPoint> random_curve(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RDPoint> pts;
  double psnr = 26.0 + 4.0 * u(rng), bpp = 0.05 + 0.2 * u(rng);
  for (int i = 0; i < n; ++i) {
    pts.push_back({bpp, psnr, 0.0});
    psnr += 0.8 + 2.5 * u(rng);
    bpp *= 1.2 + 0.8 * u(rng);
  }
  return pts;
}

}  // namespace aifc::testing
