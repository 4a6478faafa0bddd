#include "aifc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "aifc/error.hpp"

namespace aifc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + shape_str(shape_));
  return shape_[axis];
}

double& Tensor::at(int b, int c, int y, int x) {
  return data_[((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

double Tensor::at(int b, int c, int y, int x) const {
  return data_[((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::same_values(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sum_squares(const Tensor& t) { return dot(t, t); }

}  // namespace aifc
