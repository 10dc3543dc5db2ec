#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/types.h>

namespace efgan {

/// 8-bit interleaved image (row-major, HWC).
struct ByteImage {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * channels + c]; }
};

/// A face or patch with values in [-1, 1], stored as a float [C, H, W] tensor.
///
/// Construction validates the invariants: three dimensions, one or three
/// channels, finite values inside [-1, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(torch::Tensor chw);

  static ImageTensor zeros(int64_t height, int64_t width, int64_t channels = 3);

  int64_t channels() const { return data_.size(0); }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }

  const torch::Tensor& tensor() const { return data_; }
  /// [1, C, H, W] view for network input.
  torch::Tensor batched() const { return data_.unsqueeze(0); }

 private:
  torch::Tensor data_;
};

constexpr double normalize_value(double raw) { return raw / 127.5 - 1.0; }
constexpr double denormalize_value(double v) { return (v + 1.0) * 127.5; }

ImageTensor normalize_image(const ByteImage& raw);
/// Inverse of normalize_image, rounding to the nearest byte and clamping.
ByteImage denormalize_image(const torch::Tensor& chw);
ByteImage denormalize_image(const ImageTensor& image);

struct PngHeader {
  int width = 0;
  int height = 0;
  int channels = 0;
};

ByteImage read_png(const std::filesystem::path& path);
PngHeader read_png_header(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ByteImage& image);

/// Tile [C, H, W] images row-major into one canvas with `pad` px of white between cells.
ByteImage make_grid(std::span<const torch::Tensor> images, int columns, int pad = 2);

}  // namespace efgan
