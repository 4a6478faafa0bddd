#pragma once

// Bitstream framing. Little-endian header, 38 bytes:
//   0  magic "AIFC"
//   4  version u8
//   5  model fingerprint u64
//  13  width u16, height u16 (original, unpadded)
//  17  lambda index u8 (255 = off-grid)
//  18  four u32 sub-stream lengths: z_aux, y_aux residuals, z, y residuals
//  34  CRC-32 u32 over bytes [0, 34) and the payload
// followed by the four sub-streams back to back.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace aifc {

inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr std::size_t kHeaderSize = 38;

enum Stream : int { kZAux = 0, kYAux = 1, kZMain = 2, kYMain = 3 };
inline constexpr int kNumStreams = 4;

struct ContainerHeader {
  std::uint8_t version = kContainerVersion;
  std::uint64_t fingerprint = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t lambda_index = 255;
  std::array<std::uint32_t, kNumStreams> lengths{};
  std::uint32_t checksum = 0;

  std::uint64_t payload_size() const;
};

struct Container {
  ContainerHeader header;
  std::array<std::vector<std::uint8_t>, kNumStreams> streams;
};

// Fills in lengths and checksum from the streams.
std::vector<std::uint8_t> write_container(Container c);

// Validation order: magic, version, lengths vs. file size, checksum, dimensions.
// Throws FormatError, VersionError, TruncatedError or ChecksumError.
Container parse_container(std::span<const std::uint8_t> bytes);
// Header fields only, with magic/version/length checks but no checksum check.
ContainerHeader parse_header(std::span<const std::uint8_t> bytes);

std::uint32_t crc32(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b = {});

}  // namespace aifc
