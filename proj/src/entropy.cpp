#include "aifc/entropy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "aifc/error.hpp"
#include "aifc/ops.hpp"

namespace aifc::entropy {
namespace {

constexpr double kTailPerSide = kTailMass / 2.0;

double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }

double sigmoid(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

}  // namespace

std::vector<ChannelRange> split_segments(int channels, int count) {
  if (count < 1 || count > channels)
    throw InvalidArgument("cannot split " + std::to_string(channels) + " channels into " + std::to_string(count) +
                          " segments");
  std::vector<ChannelRange> out;
  const int base = channels / count, extra = channels % count;
  int begin = 0;
  for (int i = 0; i < count; ++i) {
    const int len = base + (i < extra ? 1 : 0);
    out.push_back({begin, begin + len});
    begin += len;
  }
  return out;
}

void LatentCode::validate() const {
  if (channels <= 0 || height <= 0 || width <= 0) throw ShapeError("latent code has an empty grid");
  if (values.size() != static_cast<std::size_t>(channels) * height * width)
    throw ShapeError("latent code values do not match its grid");
  int next = 0;
  for (const auto& s : segments) {
    if (s.begin != next || s.end <= s.begin) throw ShapeError("segments do not partition the channel axis");
    next = s.end;
  }
  if (next != channels) throw ShapeError("segments do not cover every channel");
}

std::int64_t quantize_residual(double y, double mu) {
  const double d = y - mu;
  if (!std::isfinite(d)) throw InvalidArgument("quantize: non-finite input");
  if (std::abs(d) > 0x1p52) throw InvalidArgument("quantize: residual out of range");
  return static_cast<std::int64_t>(std::round(d));
}

Quantized quantize(const Tensor& y, const Tensor& mu) {
  if (y.shape() != mu.shape()) throw ShapeError("quantize: " + shape_str(y.shape()) + " vs " + shape_str(mu.shape()));
  Quantized q;
  q.residual.resize(y.size());
  q.reconstruction = Tensor(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    q.residual[i] = quantize_residual(y[i], mu[i]);
    q.reconstruction[i] = static_cast<double>(q.residual[i]) + mu[i];
  }
  return q;
}

Tensor uniform_noise(const Shape& shape, std::mt19937_64& rng) {
  Tensor n(shape);
  // 53-bit mantissa draw so the sequence is fixed by the engine alone.
  for (double& v : n.data()) v = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  return n;
}

RelaxedResidual noise_quantize(Var y, Var mu, const Tensor& noise) {
  if (noise.shape() != y.shape()) throw ShapeError("noise_quantize: noise shape mismatch");
  Tape& tape = *y.tape;
  Var residual = ops::sub(y, mu);
  RelaxedResidual r;
  r.rate_input = ops::add(residual, tape.constant(noise));
  r.reconstruction = ops::add(mu, ops::ste_round(residual));
  return r;
}

RelaxedResidual noise_quantize(Var y, Var mu, std::mt19937_64& rng) {
  return noise_quantize(y, mu, uniform_noise(y.shape(), rng));
}

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

double gaussian_pmf(double r, double sigma) {
  const double a = std::abs(r);
  return normal_cdf((0.5 - a) / sigma) - normal_cdf((-0.5 - a) / sigma);
}

CdfTable quantize_pmf(std::int64_t min_symbol, std::span<const double> pmf, double tail_mass) {
  const std::size_t n = pmf.size() + 1;
  if (pmf.empty() || n > kCdfTotal) throw SupportOverflowError("alphabet does not fit the CDF precision");
  std::vector<std::int64_t> freq(n);
  for (std::size_t i = 0; i < pmf.size(); ++i)
    freq[i] = std::max<std::int64_t>(1, std::llround(std::max(0.0, pmf[i]) * kCdfTotal));
  freq[n - 1] = std::max<std::int64_t>(1, std::llround(std::max(0.0, tail_mass) * kCdfTotal));

  std::int64_t diff = static_cast<std::int64_t>(kCdfTotal) - std::accumulate(freq.begin(), freq.end(), std::int64_t{0});
  if (diff > 0) {
    freq[std::max_element(freq.begin(), freq.end()) - freq.begin()] += diff;
  } else if (diff < 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
    while (diff < 0) {
      bool moved = false;
      for (std::size_t idx : order) {
        if (freq[idx] > 1) {
          // Take proportionally from large entries, at least one count.
          const std::int64_t take = std::min<std::int64_t>(-diff, std::max<std::int64_t>(1, freq[idx] / 64));
          const std::int64_t can = std::min(take, freq[idx] - 1);
          freq[idx] -= can;
          diff += can;
          moved = true;
          if (diff == 0) break;
        }
      }
      if (!moved) throw SupportOverflowError("cannot normalize frequencies");
    }
  }
  CdfTable t;
  t.min_symbol = min_symbol;
  t.cdf.resize(n + 1);
  t.cdf[0] = 0;
  for (std::size_t i = 0; i < n; ++i) t.cdf[i + 1] = t.cdf[i] + static_cast<std::uint32_t>(freq[i]);
  return t;
}

CdfTable GaussianConditional::table(double sigma) const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("gaussian table: invalid sigma");
  auto upper_tail = [sigma](std::int64_t hw) { return normal_cdf(-(static_cast<double>(hw) + 0.5) / sigma); };
  std::int64_t hw = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(3.1 * sigma - 0.5)));
  for (int attempt = 0;; ++attempt) {
    const bool fits = 2 * hw + 1 <= kMaxSymbols;
    if (fits && upper_tail(hw) < kTailPerSide) break;
    if (attempt == 1 || !fits)
      throw SupportOverflowError("gaussian support for sigma=" + std::to_string(sigma) + " exceeds the table limit");
    hw = 2 * hw + 1;
  }
  std::vector<double> pmf(static_cast<std::size_t>(2 * hw + 1));
  for (std::int64_t r = -hw; r <= hw; ++r) pmf[r + hw] = gaussian_pmf(static_cast<double>(r), sigma);
  return quantize_pmf(-hw, pmf, 2.0 * upper_tail(hw));
}

RateEstimate GaussianConditional::rate(std::span<const std::int64_t> residuals, std::span<const double> sigmas) const {
  if (residuals.size() != sigmas.size()) throw ShapeError("gaussian rate: size mismatch");
  RateEstimate est;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double p = gaussian_pmf(static_cast<double>(residuals[i]), floor(sigmas[i]));
    if (p < kLikelihoodFloor) ++est.underflow;
    est.bits -= std::log2(std::max(p, kLikelihoodFloor));
  }
  return est;
}

FactorizedModel::FactorizedModel(ParameterStore& store, const std::string& name, int channels, std::vector<int> filters,
                                 double init_scale)
    : channels_(channels) {
  dims_.push_back(1);
  dims_.insert(dims_.end(), filters.begin(), filters.end());
  dims_.push_back(1);
  for (int d : dims_)
    if (d < 1 || d > 8) throw InvalidArgument("factorized model filter widths must be in [1, 8]");
  const int num_layers = static_cast<int>(dims_.size()) - 1;
  const double layer_scale = std::pow(init_scale, 1.0 / num_layers);
  for (int k = 0; k < num_layers; ++k) {
    const int in = dims_[k], out = dims_[k + 1];
    const double init = std::log(std::expm1(1.0 / layer_scale / out));
    Layer layer;
    const std::string p = name + ".layer" + std::to_string(k);
    layer.matrix = &store.create(p + ".matrix", {channels, out, in}, Init::kConst, init);
    layer.bias = &store.create(p + ".bias", {channels, out, 1}, Init::kUniform, 0.5);
    if (k + 1 < num_layers) layer.factor = &store.create(p + ".factor", {channels, out, 1}, Init::kZero);
    layers_.push_back(layer);
  }
}

double FactorizedModel::logits_cdf(int channel, double x) const {
  double cur[8] = {x};
  double next[8];
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const int in = dims_[k], out = dims_[k + 1];
    const Tensor& m = layers_[k].matrix->value;
    const Tensor& b = layers_[k].bias->value;
    for (int j = 0; j < out; ++j) {
      double s = b[static_cast<std::size_t>(channel) * out + j];
      for (int i = 0; i < in; ++i) s += softplus(m[(static_cast<std::size_t>(channel) * out + j) * in + i]) * cur[i];
      if (layers_[k].factor) s += std::tanh(layers_[k].factor->value[static_cast<std::size_t>(channel) * out + j]) * std::tanh(s);
      next[j] = s;
    }
    std::copy_n(next, out, cur);
  }
  return cur[0];
}

double FactorizedModel::cdf(int channel, double x) const { return sigmoid(logits_cdf(channel, x)); }

double FactorizedModel::pmf(int channel, double n) const {
  const double lower = logits_cdf(channel, n - 0.5);
  const double upper = logits_cdf(channel, n + 0.5);
  const double s = (lower + upper) > 0 ? -1.0 : 1.0;
  return std::abs(sigmoid(s * upper) - sigmoid(s * lower));
}

Var FactorizedModel::logits(Tape& tape, Var x) const {
  for (const Layer& layer : layers_) {
    x = ops::bmm(ops::softplus(tape.param(*layer.matrix)), x);
    x = ops::add_bcast(x, tape.param(*layer.bias));
    if (layer.factor) x = ops::add(x, ops::mul_bcast(ops::tanh(x), ops::tanh(tape.param(*layer.factor))));
  }
  return x;
}

Var FactorizedModel::likelihood(Tape& tape, Var z) const {
  const Shape& zs = z.shape();
  if (zs.size() != 4 || zs[0] != 1 || zs[1] != channels_)
    throw ShapeError("factorized model expects [1," + std::to_string(channels_) + ",h,w], got " + shape_str(zs));
  Var x = ops::reshape(z, {channels_, 1, zs[2] * zs[3]});
  Var lower = logits(tape, ops::add_scalar(x, -0.5));
  Var upper = logits(tape, ops::add_scalar(x, 0.5));
  Tensor sign(lower.shape());
  for (std::size_t i = 0; i < sign.size(); ++i) sign[i] = (lower.value()[i] + upper.value()[i]) > 0 ? -1.0 : 1.0;
  Var s = tape.constant(std::move(sign));
  Var lik = ops::abs(ops::sub(ops::sigmoid(ops::mul(s, upper)), ops::sigmoid(ops::mul(s, lower))));
  return ops::reshape(lik, zs);
}

Var FactorizedModel::bits(Tape& tape, Var z) const { return ops::neg_log2_clamped(likelihood(tape, z)); }

CdfTable FactorizedModel::table(int channel) const {
  if (channel < 0 || channel >= channels_) throw InvalidArgument("factorized table: channel out of range");
  auto lower_tail = [&](std::int64_t n) { return sigmoid(logits_cdf(channel, static_cast<double>(n) - 0.5)); };
  auto upper_tail = [&](std::int64_t n) { return sigmoid(-logits_cdf(channel, static_cast<double>(n) + 0.5)); };
  for (std::int64_t limit : {std::int64_t{1} << 10, std::int64_t{1} << 14}) {
    if (lower_tail(-limit) > kTailPerSide || upper_tail(limit) > kTailPerSide) continue;
    // lo: largest n with lower_tail(n) <= tau; hi: smallest n with upper_tail(n) <= tau.
    std::int64_t a = -limit, b = limit;
    while (a < b) {
      const std::int64_t m = a + (b - a + 1) / 2;
      if (lower_tail(m) <= kTailPerSide) a = m; else b = m - 1;
    }
    const std::int64_t lo = a;
    a = -limit;
    b = limit;
    while (a < b) {
      const std::int64_t m = a + (b - a) / 2;
      if (upper_tail(m) <= kTailPerSide) b = m; else a = m + 1;
    }
    const std::int64_t hi = std::max(a, lo);
    if (hi - lo + 1 > kMaxSymbols) continue;
    std::vector<double> pmf(static_cast<std::size_t>(hi - lo + 1));
    for (std::int64_t n = lo; n <= hi; ++n) pmf[n - lo] = this->pmf(channel, static_cast<double>(n));
    return quantize_pmf(lo, pmf, lower_tail(lo) + upper_tail(hi));
  }
  throw SupportOverflowError("factorized model support for channel " + std::to_string(channel) +
                             " exceeds the table limit");
}

RateEstimate FactorizedModel::rate(const LatentCode& code) const {
  code.validate();
  if (code.channels != channels_) throw ShapeError("factorized rate: channel mismatch");
  RateEstimate est;
  const std::size_t plane = static_cast<std::size_t>(code.height) * code.width;
  for (int c = 0; c < code.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const double p = pmf(c, static_cast<double>(code.values[c * plane + i]));
      if (p < kLikelihoodFloor) ++est.underflow;
      est.bits -= std::log2(std::max(p, kLikelihoodFloor));
    }
  return est;
}

double table_bits(const CdfTable& table, std::int64_t value) {
  const double total = static_cast<double>(kCdfTotal);
  if (value >= table.min_symbol && value <= table.max_symbol())
    return -std::log2(table.freq(static_cast<int>(value - table.min_symbol)) / total);
  const bool above = value > table.max_symbol();
  const auto distance = above ? static_cast<std::uint64_t>(value - table.max_symbol())
                              : static_cast<std::uint64_t>(table.min_symbol - value);
  return -std::log2(table.freq(table.escape_index()) / total) + 1.0 + 6.0 + (std::bit_width(distance) - 1);
}

void encode_value(RangeEncoder& enc, const CdfTable& table, std::int64_t value) {
  if (value >= table.min_symbol && value <= table.max_symbol()) {
    enc.encode_symbol(static_cast<int>(value - table.min_symbol), table.cdf);
    return;
  }
  enc.encode_symbol(table.escape_index(), table.cdf);
  const bool above = value > table.max_symbol();
  enc.encode_bits(above ? 1 : 0, 1);
  const std::uint64_t distance =
      above ? static_cast<std::uint64_t>(value - table.max_symbol()) : static_cast<std::uint64_t>(table.min_symbol - value);
  // distance >= 1; send its bit width then the bits below the leading one.
  const int width = std::bit_width(distance);
  if (width > 62) throw SymbolError("escape magnitude too large");
  enc.encode_bits(static_cast<std::uint32_t>(width), 6);
  int remaining = width - 1;
  while (remaining > 0) {
    const int chunk = std::min(remaining, 16);
    remaining -= chunk;
    enc.encode_bits(static_cast<std::uint32_t>((distance >> remaining) & ((1u << chunk) - 1)), chunk);
  }
}

std::int64_t decode_value(RangeDecoder& dec, const CdfTable& table) {
  const int s = dec.decode_symbol(table.cdf);
  if (s != table.escape_index()) return table.min_symbol + s;
  const bool above = dec.decode_bits(1) != 0;
  const int width = static_cast<int>(dec.decode_bits(6));
  if (width < 1 || width > 62) throw CorruptStreamError("invalid escape width");
  std::uint64_t distance = 1;
  int remaining = width - 1;
  while (remaining > 0) {
    const int chunk = std::min(remaining, 16);
    remaining -= chunk;
    distance = (distance << chunk) | dec.decode_bits(chunk);
  }
  return above ? table.max_symbol() + static_cast<std::int64_t>(distance)
               : table.min_symbol - static_cast<std::int64_t>(distance);
}

}  // namespace aifc::entropy
