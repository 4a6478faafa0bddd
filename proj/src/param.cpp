#include "aifc/param.hpp"

#include <cmath>

#include "aifc/error.hpp"

namespace aifc {

Parameter& ParameterStore::create(const std::string& name, Shape shape, Init init, double arg) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter name: " + name);
  Parameter p;
  p.name = name;
  p.value = Tensor(shape);
  p.grad = Tensor(shape);
  auto data = p.value.data();
  switch (init) {
    case Init::kZero:
      break;
    case Init::kConst:
      p.value.fill(arg);
      break;
    case Init::kUniform: {
      std::uniform_real_distribution<double> u(-arg, arg);
      for (double& v : data) v = u(rng_);
      break;
    }
    case Init::kFanIn: {
      const double fan_in = shape.empty() ? 1.0 : static_cast<double>(p.value.size()) / shape[0];
      const double bound = std::sqrt(3.0 / fan_in) * arg;
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : data) v = u(rng_);
      break;
    }
  }
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.params_.size() != params_.size()) throw ShapeError("parameter stores differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || params_[i].value.shape() != other.params_[i].value.shape())
      throw ShapeError("parameter mismatch at " + params_[i].name);
    params_[i].value = other.params_[i].value;
  }
}

}  // namespace aifc
