#pragma once

// End-to-end encode/decode. Both directions run the same tape-free forward
// code, so the decoder rebuilds every (mu, sigma) and every CDF table from
// exactly the values the encoder used.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "aifc/container.hpp"
#include "aifc/entropy.hpp"
#include "aifc/image.hpp"
#include "aifc/model.hpp"

namespace aifc {

// Largest padded pixel count the codec accepts.
inline constexpr std::int64_t kMaxPixels = std::int64_t{1} << 26;

struct StreamStats {
  std::size_t bytes = 0;
  std::size_t symbols = 0;
  std::size_t escapes = 0;
  // Sum of -log2 pmf over the coded symbols under the continuous model.
  double estimated_bits = 0.0;
};

struct EncodeReport {
  int width = 0;
  int height = 0;
  std::array<StreamStats, kNumStreams> streams;
  std::size_t file_bytes = 0;

  std::size_t aux_bytes() const { return streams[kZAux].bytes + streams[kYAux].bytes; }
  std::size_t main_bytes() const { return streams[kZMain].bytes + streams[kYMain].bytes; }
  std::size_t payload_bytes() const { return aux_bytes() + main_bytes(); }
  // Auxiliary share of the payload (header excluded).
  double aux_ratio() const;
  // 8 * file size over the original pixel count.
  double bpp() const;
  double estimated_bits() const;
};

// Latents and reconstructions seen by one side of the codec.
struct CodecTrace {
  std::array<entropy::LatentCode, kNumStreams> codes;
  Tensor y_aux_hat;  // [1, M_aux, h, w]
  Tensor y_hat;      // [1, M, h, w]
  Tensor x_hat;      // padded, unclamped
};

struct EncodeResult {
  std::vector<std::uint8_t> bytes;
  EncodeReport report;
  CodecTrace trace;
  Image reconstruction;  // what decode_image will return
};

struct DecodeResult {
  ContainerHeader header;
  CodecTrace trace;
  Image image;
};

EncodeResult encode_image(const CodecModel& model, const Image& image);
// Throws the container's format errors, ConfigMismatchError when the stream
// was produced by other weights, and CorruptStreamError on undecodable data.
DecodeResult decode_image(const CodecModel& model, std::span<const std::uint8_t> bytes);

}  // namespace aifc
