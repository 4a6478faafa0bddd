#include "aifc/range_coder.hpp"

#include <algorithm>

#include "aifc/error.hpp"

namespace aifc {
namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
  if (finished_) throw InvalidArgument("range encoder already finished");
  if (freq == 0 || cum + freq > kCdfTotal) throw SymbolError("invalid frequency interval");
  const std::uint32_t r = range_ >> kCdfPrecision;
  low_ += static_cast<std::uint64_t>(r) * cum;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_symbol(int symbol, std::span<const std::uint32_t> cdf) {
  if (cdf.size() < 2 || cdf.front() != 0 || cdf.back() != kCdfTotal) throw SymbolError("malformed cdf table");
  if (symbol < 0 || static_cast<std::size_t>(symbol) + 1 >= cdf.size())
    throw SymbolError("symbol " + std::to_string(symbol) + " outside table of " + std::to_string(cdf.size() - 1));
  const std::uint32_t lo = cdf[symbol], hi = cdf[symbol + 1];
  if (hi <= lo) throw SymbolError("symbol " + std::to_string(symbol) + " has zero frequency");
  encode(lo, hi - lo);
}

void RangeEncoder::encode_bits(std::uint32_t value, int nbits) {
  if (nbits < 1 || nbits > kCdfPrecision) throw InvalidArgument("encode_bits: nbits must be in [1,16]");
  if (value >> nbits) throw InvalidArgument("encode_bits: value does not fit");
  const int shift = kCdfPrecision - nbits;
  encode(value << shift, 1u << shift);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (finished_) throw InvalidArgument("range encoder already finished");
  for (int i = 0; i < 5; ++i) shift_low();
  finished_ = true;
  std::vector<std::uint8_t> bytes(out_.begin() + 1, out_.end());
  while (!bytes.empty() && bytes.back() == 0) bytes.pop_back();
  return bytes;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  overrun_ = 0;
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ < bytes_.size()) return bytes_[pos_++];
  ++overrun_;
  return 0;
}

std::uint32_t RangeDecoder::target() {
  step_ = range_ >> kCdfPrecision;
  const std::uint32_t t = code_ / step_;
  return std::min<std::uint32_t>(t, kCdfTotal - 1);
}

void RangeDecoder::update(std::uint32_t cum, std::uint32_t freq) {
  code_ -= step_ * cum;
  range_ = step_ * freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

int RangeDecoder::decode_symbol(std::span<const std::uint32_t> cdf) {
  if (cdf.size() < 2 || cdf.front() != 0 || cdf.back() != kCdfTotal) throw SymbolError("malformed cdf table");
  const std::uint32_t t = target();
  // Last index s with cdf[s] <= t.
  auto it = std::upper_bound(cdf.begin(), cdf.end(), t);
  int s = static_cast<int>(it - cdf.begin()) - 1;
  s = std::clamp(s, 0, static_cast<int>(cdf.size()) - 2);
  // Zero-width entries cannot be produced by the encoder; a corrupt stream may
  // still land on one, so step back to a live interval.
  while (s > 0 && cdf[s + 1] == cdf[s]) --s;
  if (cdf[s + 1] == cdf[s]) throw CorruptStreamError("decoder landed on an empty interval");
  update(cdf[s], cdf[s + 1] - cdf[s]);
  return s;
}

std::uint32_t RangeDecoder::decode_bits(int nbits) {
  if (nbits < 1 || nbits > kCdfPrecision) throw InvalidArgument("decode_bits: nbits must be in [1,16]");
  const int shift = kCdfPrecision - nbits;
  const std::uint32_t v = target() >> shift;
  update(v << shift, 1u << shift);
  return v;
}

}  // namespace aifc
