#pragma once

// Tensor files: a flat little-endian float blob at `path` plus a JSON
// manifest at `path + ".json"` mapping tensor names to shapes and byte
// offsets. Codec weights use f32; training checkpoints use f64 so they
// round-trip bit-exactly.

#include <string>
#include <vector>

#include <json.hpp>

#include "aifc/param.hpp"
#include "aifc/tensor.hpp"

namespace aifc {

enum class DType { kF32, kF64 };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct TensorFile {
  DType dtype = DType::kF32;
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;
};

std::string manifest_path(const std::string& data_path);

void write_tensor_file(const std::string& path, const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                       DType dtype, const nlohmann::json& meta);
TensorFile read_tensor_file(const std::string& path);

// Writes every parameter in store order as f32.
void save_weights(const std::string& path, const ParameterStore& store, const nlohmann::json& meta);
// Loads into an already-built store; names and shapes must match exactly.
nlohmann::json load_weights(const std::string& path, ParameterStore& store);

}  // namespace aifc
