#include "aifc/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "aifc/error.hpp"

namespace aifc {
namespace {

struct HeaderReader {
  std::span<const std::uint8_t> b;
  std::size_t pos = 0;

  void skip_space() {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  }

  int number() {
    skip_space();
    long v = 0;
    std::size_t start = pos;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos] - '0');
      if (v > 1 << 20) throw ParseError("PPM header value too large");
      ++pos;
    }
    if (pos == start) throw ParseError("malformed PPM header");
    return static_cast<int>(v);
  }
};

}  // namespace

Image parse_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw ParseError("not a binary PPM (P6) image");
  HeaderReader r{bytes, 2};
  Image img;
  img.width = r.number();
  img.height = r.number();
  const int maxval = r.number();
  if (maxval != 255) throw ParseError("only 8-bit PPM (maxval 255) is supported");
  if (img.width <= 0 || img.height <= 0) throw ParseError("PPM has zero size");
  if (r.pos >= bytes.size() || !std::isspace(bytes[r.pos])) throw ParseError("malformed PPM header");
  ++r.pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  if (bytes.size() - r.pos < n) throw ParseError("PPM pixel data truncated");
  img.rgb.assign(bytes.begin() + r.pos, bytes.begin() + r.pos + n);
  return img;
}

std::vector<std::uint8_t> format_ppm(const Image& img) {
  const std::string head = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw IoError("no such file: " + path);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

Image read_ppm(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return parse_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_ppm(const std::string& path, const Image& img) { write_file(path, format_ppm(img)); }

int padded_extent(int n, int multiple) { return (n + multiple - 1) / multiple * multiple; }

Tensor image_to_tensor(const Image& img, int multiple) {
  if (img.width <= 0 || img.height <= 0) throw InvalidArgument("image has zero size");
  if (img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw InvalidArgument("image buffer does not match its dimensions");
  const int hp = padded_extent(img.height, multiple);
  const int wp = padded_extent(img.width, multiple);
  Tensor t({1, 3, hp, wp});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < hp; ++y) {
      const int sy = std::min(y, img.height - 1);
      for (int x = 0; x < wp; ++x) {
        const int sx = std::min(x, img.width - 1);
        t.at(0, c, y, x) = img.rgb[(static_cast<std::size_t>(sy) * img.width + sx) * 3 + c] / 255.0;
      }
    }
  return t;
}

Tensor crop(const Tensor& t, int width, int height) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(2) < height || t.dim(3) < width)
    throw ShapeError("cannot crop " + shape_str(t.shape()) + " to " + std::to_string(width) + "x" +
                     std::to_string(height));
  const int c_count = t.dim(1);
  Tensor out({1, c_count, height, width});
  for (int c = 0; c < c_count; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(0, c, y, x) = t.at(0, c, y, x);
  return out;
}

Image tensor_to_image(const Tensor& t, int width, int height) {
  if (t.rank() != 4 || t.dim(1) != 3) throw ShapeError("expected [1, 3, H, W], got " + shape_str(t.shape()));
  const Tensor c = crop(t, width, height);
  Image img{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double v = std::clamp(c.at(0, ch, y, x), 0.0, 1.0);
        img.rgb[(static_cast<std::size_t>(y) * width + x) * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

}  // namespace aifc
