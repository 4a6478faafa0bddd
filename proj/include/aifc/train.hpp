#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "aifc/model.hpp"

namespace aifc {

struct TrainOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
  std::uint64_t seed = 0;  // noise stream
  double divergence_factor = 10.0;
};

struct LossRecord {
  long step = 0;
  double loss = 0.0;
  double bpp = 0.0;  // estimated, from the relaxed rate
  double mse = 0.0;
};

// Adam on batch-1 rate-distortion steps. The model's config lambda is the
// trade-off; noise comes from a seeded generator, so a run is reproducible.
class Trainer {
 public:
  Trainer(CodecModel& model, TrainOptions options);

  // One update on patch x [1, 3, H, W]; returns the loss before the update.
  LossRecord step(const Tensor& x);
  // `steps` updates cycling through patches in order. Throws DivergenceError
  // when a loss is non-finite or exceeds divergence_factor x the first loss.
  std::vector<LossRecord> run(const std::vector<Tensor>& patches, int steps);

  long steps_done() const { return t_; }
  const TrainOptions& options() const { return opt_; }

  // f64 tensor file with parameters, Adam moments, step count and RNG state.
  void save_checkpoint(const std::string& path) const;
  // The model must have the checkpoint's config.
  void load_checkpoint(const std::string& path);

 private:
  CodecModel& model_;
  TrainOptions opt_;
  std::mt19937_64 rng_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
  double first_loss_ = 0.0;
};

// Mean rate-distortion loss over patches without updating, with noise
// drawn from a fresh generator seeded by `seed`.
LossRecord evaluate_loss(const CodecModel& model, const std::vector<Tensor>& patches, std::uint64_t seed);

std::string format_loss_csv(const std::vector<LossRecord>& records);

// Deterministic synthetic 8-bit-valued RGB patches [1, 3, size, size]:
// colour gradients with a few flat ellipses and rectangles.
std::vector<Tensor> synthetic_patches(int count, int size, std::uint64_t seed);

}  // namespace aifc
