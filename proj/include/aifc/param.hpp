#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "aifc/tensor.hpp"

namespace aifc {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape()); }
};

enum class Init {
  kZero,
  kConst,     // value = arg
  kUniform,   // U(-arg, arg)
  kFanIn,     // U(-b, b), b = sqrt(3 / fan_in) * arg; fan_in = numel / shape[0]
};

// Owns every learnable tensor of a model. Addresses are stable; iteration
// order is creation order, which fixes serialization and optimizer order.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& create(const std::string& name, Shape shape, Init init, double arg = 1.0);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  std::size_t total_elements() const;

  void zero_grad();
  void copy_values_from(const ParameterStore& other);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::mt19937_64 rng_;
};

}  // namespace aifc
