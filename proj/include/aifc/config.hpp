#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace aifc {

// Architecture and coding hyperparameters. Every field round-trips through
// the flat `key = value` text format; the canonical text feeds the config hash.
struct CodecConfig {
  // Auxiliary coarse network: encoder widths at 1/2, 1/4, 1/8 and latent width at 1/16.
  std::vector<int> aux_channels{32, 48, 48};
  int aux_latent = 32;
  int hyper_channels = 32;
  // Predicted feature widths at 1/1, 1/2, 1/4, 1/16.
  int feat_c1 = 16;
  int feat_c2 = 32;
  int feat_c4 = 48;
  int feat_c16 = 32;
  // Main network: width of the full-resolution conv, encoder widths at 1/2, 1/4, 1/8, latent width at 1/16.
  int main_full = 16;
  std::vector<int> main_channels{48, 64, 64};
  int main_latent = 48;
  // Aux latent is split into 2 * num_slices segments; the main latent into main_segments.
  int num_slices = 4;
  int main_segments = 4;
  int pe_hidden = 32;
  int attention_downsample = 2;
  double sigma_min = 0.04;
  int pad_multiple = 64;
  double lambda = 0.01;
  int cdf_precision = 16;

  void validate() const;
  std::string to_text() const;
  static CodecConfig parse(const std::string& text);
  static CodecConfig load(const std::string& path);
  void save(const std::string& path) const;

  std::uint64_t hash() const;
  int aux_segments() const { return 2 * num_slices; }

  bool operator==(const CodecConfig&) const = default;
};

// Rate points used for model sweeps.
inline constexpr std::array<double, 7> kLambdaGrid{0.0025, 0.005, 0.01, 0.02, 0.04, 0.08, 0.16};
// Index into kLambdaGrid, or 255 when lambda is off-grid.
std::uint8_t lambda_index(double lambda);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace aifc
