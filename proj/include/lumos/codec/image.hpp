#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumos/numcore/tensor.hpp"

namespace lumos {

/// CHW float image, values in [0, 1].
struct Image {
  std::size_t channels = 3, height = 0, width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  bool empty() const { return data.empty(); }
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void clamp01(Image& img);
/// Rec. 601 luma per pixel, [H * W].
std::vector<float> luma(const Image& img);
double mean_luma(const Image& img);
/// Central crop to (h, w); both must not exceed the image.
Image center_crop(const Image& img, std::size_t h, std::size_t w);

/// [1, C, H, W] tensor of the image.
Tensor to_tensor(const Image& img, DType dtype = DType::f32);
/// Stacks equally sized images into [N, C, H, W].
Tensor to_batch(const std::vector<const Image*>& imgs, DType dtype = DType::f32);
/// Image from row n of a [N, C, H, W] tensor, clamped to [0, 1].
Image from_tensor(const Tensor& t, std::size_t n = 0);

/// 8-bit PNG. Grey and alpha inputs are expanded/dropped to RGB.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);
Image decode_png(const std::string& bytes);
std::string encode_png(const Image& img);

std::string base64_encode(const std::string& bytes);
/// Throws ImageError on malformed input.
std::string base64_decode(const std::string& text);

}  // namespace lumos
