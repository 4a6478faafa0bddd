#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aifc/tensor.hpp"

namespace aifc {

// 8-bit interleaved RGB.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  bool operator==(const Image&) const = default;
};

// Binary PPM (P6, maxval 255).
Image parse_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> format_ppm(const Image& img);
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// [1, 3, H', W'] in [0, 1], edge-replicated up to the next multiple of `multiple`.
Tensor image_to_tensor(const Image& img, int multiple = 1);
// Crops the top-left width x height region, clamps to [0, 1] and rounds to 8 bits.
Image tensor_to_image(const Tensor& t, int width, int height);
// Crop without quantization.
Tensor crop(const Tensor& t, int width, int height);

int padded_extent(int n, int multiple);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace aifc
