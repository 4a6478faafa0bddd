#include "aifc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aifc/error.hpp"

namespace aifc {

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (a.empty()) throw ShapeError("psnr: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return psnr_from_mse(s / static_cast<double>(a.size()));
}

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size())
    throw ShapeError("psnr: image size mismatch");
  if (a.rgb.empty()) throw ShapeError("psnr: empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = (static_cast<double>(a.rgb[i]) - b.rgb[i]) / 255.0;
    s += d * d;
  }
  return psnr_from_mse(s / static_cast<double>(a.rgb.size()));
}

std::vector<RDPoint> parse_rd_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  std::vector<RDPoint> pts;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "bpp,psnr_db,lambda")
        throw ParseError("line " + std::to_string(n) + ": expected header 'bpp,psnr_db,lambda'", n);
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(n) + ": not a number: '" + cell + "'", n);
      }
    }
    if (v.size() != 3) throw ParseError("line " + std::to_string(n) + ": expected 3 columns", n);
    if (!(v[0] > 0.0) || !std::isfinite(v[0]) || !std::isfinite(v[1]))
      throw ParseError("line " + std::to_string(n) + ": bpp must be positive and values finite", n);
    pts.push_back({v[0], v[1], v[2]});
  }
  if (!header) throw ParseError("line 1: missing header", 1);
  return pts;
}

std::vector<RDPoint> read_rd_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("no such file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_rd_csv(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

std::string format_rd_csv(const std::vector<RDPoint>& points) {
  std::string out = "bpp,psnr_db,lambda\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.6f,%.4f,%g\n", p.bpp, p.psnr_db, p.lambda);
    out += buf;
  }
  return out;
}

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const int n = static_cast<int>(x_.size());
  if (n < 2 || static_cast<int>(y_.size()) != n) throw InvalidArgument("spline needs at least two knots");
  for (int i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw InvalidArgument("spline knots must be strictly increasing");
  m_.assign(n, 0.0);
  if (n == 2) return;
  // Tridiagonal system for interior second derivatives (Thomas algorithm).
  std::vector<double> c(n, 0.0), d(n, 0.0);
  for (int i = 1; i < n - 1; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    const double a = h0;
    const double b = 2.0 * (h0 + h1);
    const double r = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    const double denom = b - a * c[i - 1];
    c[i] = h1 / denom;
    d[i] = (r - a * d[i - 1]) / denom;
  }
  for (int i = n - 2; i >= 1; --i) m_[i] = d[i] - c[i] * m_[i + 1];
}

int NaturalCubicSpline::segment(double t) const {
  const int n = static_cast<int>(x_.size());
  int i = static_cast<int>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin()) - 1;
  return std::clamp(i, 0, n - 2);
}

double NaturalCubicSpline::operator()(double t) const {
  const int i = segment(t);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - t) / h;
  const double b = (t - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double NaturalCubicSpline::antiderivative(int i, double t) const {
  // Integral of the segment polynomial from x_[i] to t, written in u = t - x_[i].
  const double h = x_[i + 1] - x_[i];
  auto prim = [&](double uu) {
    const double ww = h - uu;
    const double ia = -(ww * ww) / (2.0 * h);
    const double ib = (uu * uu) / (2.0 * h);
    const double ia3 = -(ww * ww * ww * ww) / (4.0 * h * h * h);
    const double ib3 = (uu * uu * uu * uu) / (4.0 * h * h * h);
    return ia * y_[i] + ib * y_[i + 1] + ((ia3 - ia) * m_[i] + (ib3 - ib) * m_[i + 1]) * h * h / 6.0;
  };
  return prim(t - x_[i]) - prim(0.0);
}

double NaturalCubicSpline::integrate(double a, double b) const {
  if (a > b) return -integrate(b, a);
  const int ia = segment(a);
  const int ib = segment(b);
  if (ia == ib) return antiderivative(ia, b) - antiderivative(ia, a);
  double s = antiderivative(ia, x_[ia + 1]) - antiderivative(ia, a);
  for (int i = ia + 1; i < ib; ++i) s += antiderivative(i, x_[i + 1]);
  return s + antiderivative(ib, b);
}

namespace {

NaturalCubicSpline log_rate_curve(std::vector<RDPoint> pts, const char* which, double& lo, double& hi) {
  if (pts.size() < 4) throw InvalidArgument(std::string(which) + " curve needs at least 4 points");
  std::sort(pts.begin(), pts.end(), [](const RDPoint& a, const RDPoint& b) { return a.psnr_db < b.psnr_db; });
  std::vector<double> x, y;
  for (const auto& p : pts) {
    if (!(p.bpp > 0.0)) throw InvalidArgument(std::string(which) + " curve has non-positive bpp");
    x.push_back(p.psnr_db);
    y.push_back(std::log(p.bpp));
  }
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) throw InvalidArgument(std::string(which) + " curve has repeated PSNR values");
  lo = x.front();
  hi = x.back();
  return NaturalCubicSpline(std::move(x), std::move(y));
}

}  // namespace

double bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test) {
  double alo, ahi, tlo, thi;
  const NaturalCubicSpline a = log_rate_curve(anchor, "anchor", alo, ahi);
  const NaturalCubicSpline t = log_rate_curve(test, "test", tlo, thi);
  const double lo = std::max(alo, tlo);
  const double hi = std::min(ahi, thi);
  if (!(hi > lo)) throw NoOverlapError("RD curves do not overlap in PSNR");
  const double mean_diff = (t.integrate(lo, hi) - a.integrate(lo, hi)) / (hi - lo);
  return std::expm1(mean_diff) * 100.0;
}

}  // namespace aifc
