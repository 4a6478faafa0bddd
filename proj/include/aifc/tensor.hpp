#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace aifc {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 array. Image-like data is laid out BCHW.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessor (b, c, y, x).
  double& at(int b, int c, int y, int x);
  double at(int b, int c, int y, int x) const;

  Tensor reshaped(Shape shape) const;
  void fill(double v);

  bool same_values(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);
double sum_squares(const Tensor& t);

}  // namespace aifc
