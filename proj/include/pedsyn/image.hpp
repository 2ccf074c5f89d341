#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedsyn/tensor.hpp"

namespace pedsyn {

// 8-bit RGB image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // 3 * width * height

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(3) * w * h, 0) {}

  uint8_t* px(int x, int y) { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const uint8_t* px(int x, int y) const { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
};

// PNG encode/decode (lossless, deterministic byte output for a given image).
std::vector<uint8_t> png_encode(const Image& img);
Image png_decode(const std::vector<uint8_t>& bytes);
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// [0,1]-scaled CHW float tensor <-> 8-bit image.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);  // clamps to [0,1]

std::string base64_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

std::string sha256_hex(const uint8_t* data, size_t len);
std::string sha256_hex(const std::vector<uint8_t>& bytes);
std::string sha256_hex(const std::string& text);

}  // namespace pedsyn
