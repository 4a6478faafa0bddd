#pragma once

// Quantization, probability models and their bridge to the range coder.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "aifc/autograd.hpp"
#include "aifc/param.hpp"
#include "aifc/range_coder.hpp"

namespace aifc::entropy {

inline constexpr double kDefaultSigmaMin = 0.04;
inline constexpr double kTailMass = 1.0 / 512.0;  // 2^-9, split evenly between the two tails
inline constexpr double kLikelihoodFloor = 9.094947017729282e-13;  // 2^-40
inline constexpr int kMaxSymbols = 1 << 14;

struct ChannelRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool operator==(const ChannelRange&) const = default;
};

// Uniform partition of [0, channels) into `count` contiguous ranges; the
// first (channels % count) ranges get one extra channel.
std::vector<ChannelRange> split_segments(int channels, int count);

enum class LatentOrigin : std::uint8_t { kAux = 0, kMain = 1 };

// Integer latent grid [C, h, w] plus its channel segmentation.
struct LatentCode {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> values;
  std::vector<ChannelRange> segments;
  LatentOrigin origin = LatentOrigin::kAux;

  // Throws unless values match the grid and segments partition the channels.
  void validate() const;
  bool operator==(const LatentCode&) const = default;
};

// --- quantization -----------------------------------------------------------

// round(y - mu), half away from zero.
std::int64_t quantize_residual(double y, double mu);

struct Quantized {
  std::vector<std::int64_t> residual;
  Tensor reconstruction;  // residual + mu
};

Quantized quantize(const Tensor& y, const Tensor& mu);

struct RelaxedResidual {
  Var rate_input;      // (y - mu) + u, u ~ U(-1/2, 1/2)
  Var reconstruction;  // mu + straight-through round(y - mu)
};

// Training relaxation with an explicit noise tensor (shape of y).
RelaxedResidual noise_quantize(Var y, Var mu, const Tensor& noise);
RelaxedResidual noise_quantize(Var y, Var mu, std::mt19937_64& rng);
Tensor uniform_noise(const Shape& shape, std::mt19937_64& rng);

// --- Gaussian conditional -----------------------------------------------------

double normal_cdf(double t);
// Phi((r + 1/2)/sigma) - Phi((r - 1/2)/sigma), evaluated on the upper tail for accuracy.
double gaussian_pmf(double r, double sigma);

struct RateEstimate {
  double bits = 0.0;
  std::size_t underflow = 0;  // symbols whose pmf was clamped at 2^-40

  RateEstimate& operator+=(const RateEstimate& o) {
    bits += o.bits;
    underflow += o.underflow;
    return *this;
  }
};

// Quantized CDF over symbols [min_symbol, min_symbol + n) plus a trailing
// escape symbol. cdf has n + 2 entries from 0 to kCdfTotal, strictly increasing.
struct CdfTable {
  std::int64_t min_symbol = 0;
  std::vector<std::uint32_t> cdf;

  int retained() const { return static_cast<int>(cdf.size()) - 2; }
  int escape_index() const { return retained(); }
  std::int64_t max_symbol() const { return min_symbol + retained() - 1; }
  std::uint32_t freq(int index) const { return cdf[index + 1] - cdf[index]; }
  bool operator==(const CdfTable&) const = default;
};

// Deterministic quantization of a pmf (retained support) plus tail mass to
// integer frequencies summing to kCdfTotal, each at least one.
CdfTable quantize_pmf(std::int64_t min_symbol, std::span<const double> pmf, double tail_mass);

class GaussianConditional {
 public:
  explicit GaussianConditional(double sigma_min = kDefaultSigmaMin) : sigma_min_(sigma_min) {}

  double sigma_min() const { return sigma_min_; }
  double floor(double sigma) const { return sigma < sigma_min_ ? sigma_min_ : sigma; }

  // Table for N(0, sigma^2) * U(-1/2, 1/2) with sigma already floored.
  CdfTable table(double sigma) const;
  RateEstimate rate(std::span<const std::int64_t> residuals, std::span<const double> sigmas) const;

 private:
  double sigma_min_;
};

// --- factorized density model ---------------------------------------------

// Per-channel monotone CDF network: scalar -> 3 -> 3 -> 3 -> scalar with
// softplus-positive matrices and tanh-bounded couplings between layers.
class FactorizedModel {
 public:
  FactorizedModel() = default;
  FactorizedModel(ParameterStore& store, const std::string& name, int channels, std::vector<int> filters = {3, 3, 3},
                  double init_scale = 10.0);

  int channels() const { return channels_; }

  double logits_cdf(int channel, double x) const;
  double cdf(int channel, double x) const;
  double pmf(int channel, double n) const;

  // Likelihood of each element of z [1, C, h, w] (or its noisy relaxation).
  Var likelihood(Tape& tape, Var z) const;
  Var bits(Tape& tape, Var z) const;

  CdfTable table(int channel) const;
  RateEstimate rate(const LatentCode& code) const;

 private:
  Var logits(Tape& tape, Var x) const;  // x [C, 1, N]

  struct Layer {
    Parameter* matrix = nullptr;  // [C, out, in]
    Parameter* bias = nullptr;    // [C, out, 1]
    Parameter* factor = nullptr;  // [C, out, 1]; absent on the last layer
  };
  std::vector<Layer> layers_;
  std::vector<int> dims_;
  int channels_ = 0;
};

// --- coding with escape -------------------------------------------------------

// Exact code length of `value` under the integer table: -log2(freq / 2^16),
// plus the side bits when it has to be escaped.
double table_bits(const CdfTable& table, std::int64_t value);

// Codes value under table; out-of-support values are sent as the escape
// symbol followed by a side bit and an exponent/mantissa magnitude code.
void encode_value(RangeEncoder& enc, const CdfTable& table, std::int64_t value);
std::int64_t decode_value(RangeDecoder& dec, const CdfTable& table);

}  // namespace aifc::entropy
