#pragma once

// Byte-oriented range coder: 32-bit range, 64-bit low with deferred carry
// propagation (cache byte + run of pending 0xFF bytes). Frequencies are
// quantized to a 16-bit total.
//
// The first byte the carry scheme emits is always zero and is not stored;
// trailing zero bytes are trimmed because the decoder reads zeros past the
// end of its buffer. An empty message therefore costs zero bytes.

#include <cstdint>
#include <span>
#include <vector>

namespace aifc {

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;

class RangeEncoder {
 public:
  // Codes the interval [cum, cum + freq) of kCdfTotal.
  void encode(std::uint32_t cum, std::uint32_t freq);
  // cdf has one more entry than the alphabet: cdf[0] = 0, cdf.back() = kCdfTotal.
  void encode_symbol(int symbol, std::span<const std::uint32_t> cdf);
  // Uniform raw bits, 1 <= nbits <= 16.
  void encode_bits(std::uint32_t value, int nbits);

  std::vector<std::uint8_t> finish();

  std::size_t bytes_so_far() const { return out_.size(); }

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  int decode_symbol(std::span<const std::uint32_t> cdf);
  std::uint32_t decode_bits(int nbits);

  // Bytes requested beyond the buffer (served as zero). Non-zero only for
  // malformed input or when the encoder trimmed trailing zeros.
  std::size_t overrun() const { return overrun_; }

 private:
  std::uint8_t next_byte();
  // Returns the target frequency slot and narrows nothing; update() consumes it.
  std::uint32_t target();
  void update(std::uint32_t cum, std::uint32_t freq);

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::size_t overrun_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
  std::uint32_t step_ = 0;
};

}  // namespace aifc
