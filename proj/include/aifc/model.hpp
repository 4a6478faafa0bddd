#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "aifc/config.hpp"
#include "aifc/main_net.hpp"

namespace aifc {

// Noise-relaxed forward pass used for training.
struct TrainForward {
  Var x_hat;        // unclamped reconstruction
  Var bits_z_aux;   // scalar bit estimates per stream
  Var bits_y_aux;
  Var bits_z;
  Var bits_y;
  Var bits_total;
  Var mse;
  Var loss;
};

// Both networks plus their parameters, built deterministically from a config and a seed.
class CodecModel {
 public:
  explicit CodecModel(const CodecConfig& config, std::uint64_t seed = 0);
  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;

  const CodecConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const AuxNet& aux() const { return aux_; }
  const MainNet& main() const { return main_; }
  MainNet& main() { return main_; }

  // Hash of the canonical config text and the exact parameter values; the
  // container header carries it so a stream only decodes with its own weights.
  std::uint64_t fingerprint() const;

  // Rounds every parameter to f32, making the in-memory model equal to what
  // save() followed by load() produces.
  void round_to_f32();

  void save(const std::string& path) const;
  // Weights must have been saved from a model with the same config.
  void load(const std::string& path);

  // x [1, 3, H, W] in [0, 1]; noise drawn from rng in a fixed order.
  TrainForward train_forward(Tape& tape, Var x, double lambda, std::mt19937_64& rng) const;

 private:
  CodecConfig config_;
  ParameterStore store_;
  AuxNet aux_;
  MainNet main_;
};

// bits_total / pixels + lambda * 255^2 * mse(x, x_hat); pixels = H * W of x.
Var rd_loss(Var x, Var x_hat, Var bits_total, double lambda);

}  // namespace aifc
