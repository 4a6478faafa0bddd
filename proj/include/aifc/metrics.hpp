#pragma once

#include <string>
#include <vector>

#include "aifc/image.hpp"
#include "aifc/tensor.hpp"

namespace aifc {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) for values on the [0, 1] scale, capped at 100 dB.
double psnr(const Tensor& a, const Tensor& b);
double psnr(const Image& a, const Image& b);
double psnr_from_mse(double mse);

struct RDPoint {
  double bpp = 0.0;
  double psnr_db = 0.0;
  double lambda = 0.0;
};

// CSV with header "bpp,psnr_db,lambda". Malformed rows raise ParseError carrying the line number.
std::vector<RDPoint> parse_rd_csv(const std::string& text);
std::vector<RDPoint> read_rd_csv(const std::string& path);
std::string format_rd_csv(const std::vector<RDPoint>& points);

// Natural cubic spline through (x, y), x strictly increasing.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> x, std::vector<double> y);
  double operator()(double t) const;
  // Exact integral over [a, b] within the knot range.
  double integrate(double a, double b) const;

 private:
  int segment(double t) const;
  double antiderivative(int seg, double t) const;  // from x_[seg] to t

  std::vector<double> x_, y_, m_;  // m_: second derivatives at the knots
};

// Average rate difference of `test` against `anchor` at equal PSNR, in
// percent; negative means `test` needs fewer bits. Interpolates ln(bpp) over
// PSNR and integrates over the common PSNR interval only.
// Throws InvalidArgument with fewer than 4 points or non-increasing PSNR,
// NoOverlapError when the PSNR ranges do not overlap.
double bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test);

}  // namespace aifc
