#include "aifc/container.hpp"

#include <algorithm>

#include <zlib.h>

#include "aifc/error.hpp"

namespace aifc {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'A', 'I', 'F', 'C'};
constexpr std::size_t kChecksumOffset = 34;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get(std::span<const std::uint8_t> b, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[pos + i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t ContainerHeader::payload_size() const {
  std::uint64_t n = 0;
  for (auto l : lengths) n += l;
  return n;
}

std::uint32_t crc32(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32_z(crc, a.data(), a.size());
  if (!b.empty()) crc = ::crc32_z(crc, b.data(), b.size());
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> write_container(Container c) {
  if (c.header.width == 0 || c.header.height == 0) throw InvalidArgument("container needs non-zero dimensions");
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put(out, c.header.version);
  put(out, c.header.fingerprint);
  put(out, c.header.width);
  put(out, c.header.height);
  put(out, c.header.lambda_index);
  std::vector<std::uint8_t> payload;
  for (int s = 0; s < kNumStreams; ++s) {
    if (c.streams[s].size() > UINT32_MAX) throw InvalidArgument("sub-stream too large");
    put(out, static_cast<std::uint32_t>(c.streams[s].size()));
    payload.insert(payload.end(), c.streams[s].begin(), c.streams[s].end());
  }
  put(out, crc32(out, payload));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

ContainerHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw FormatError("bad magic: not an AIFC stream");
  if (bytes.size() < kHeaderSize) throw TruncatedError("stream shorter than the " + std::to_string(kHeaderSize) + "-byte header");
  ContainerHeader h;
  h.version = bytes[4];
  if (h.version != kContainerVersion)
    throw VersionError("unsupported container version " + std::to_string(h.version) + " (expected " +
                       std::to_string(kContainerVersion) + ")");
  h.fingerprint = get<std::uint64_t>(bytes, 5);
  h.width = get<std::uint16_t>(bytes, 13);
  h.height = get<std::uint16_t>(bytes, 15);
  h.lambda_index = bytes[17];
  for (int s = 0; s < kNumStreams; ++s) h.lengths[s] = get<std::uint32_t>(bytes, 18 + 4 * s);
  h.checksum = get<std::uint32_t>(bytes, kChecksumOffset);
  const std::uint64_t have = bytes.size() - kHeaderSize;
  if (h.payload_size() > have)
    throw TruncatedError("payload truncated: header declares " + std::to_string(h.payload_size()) + " bytes, " +
                         std::to_string(have) + " present");
  if (h.payload_size() < have)
    throw FormatError(std::to_string(have - h.payload_size()) + " trailing bytes after the payload");
  return h;
}

Container parse_container(std::span<const std::uint8_t> bytes) {
  Container c;
  c.header = parse_header(bytes);
  const auto payload = bytes.subspan(kHeaderSize);
  if (crc32(bytes.first(kChecksumOffset), payload) != c.header.checksum) throw ChecksumError("checksum mismatch");
  if (c.header.width == 0 || c.header.height == 0) throw FormatError("zero image dimension in header");
  std::size_t pos = 0;
  for (int s = 0; s < kNumStreams; ++s) {
    c.streams[s].assign(payload.begin() + pos, payload.begin() + pos + c.header.lengths[s]);
    pos += c.header.lengths[s];
  }
  return c;
}

}  // namespace aifc
