#include "efgan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include <torch/torch.h>

#include "efgan/errors.hpp"

namespace efgan {

ImageTensor::ImageTensor(torch::Tensor chw) : data_(std::move(chw)) {
  if (data_.dim() != 3) {
    throw_shape("ImageTensor", "expected [C,H,W], got " + std::to_string(data_.dim()) + " dims");
  }
  if (data_.size(0) != 1 && data_.size(0) != 3) {
    throw_shape("ImageTensor", "channels must be 1 or 3, got " + std::to_string(data_.size(0)));
  }
  if (!torch::isfinite(data_).all().item<bool>()) {
    throw ValidationError("ImageTensor: non-finite value");
  }
  constexpr double kSlack = 1e-6;
  if (data_.numel() > 0 && (data_.min().item<double>() < -1.0 - kSlack || data_.max().item<double>() > 1.0 + kSlack)) {
    throw ValidationError("ImageTensor: values outside [-1, 1]");
  }
}

ImageTensor ImageTensor::zeros(int64_t height, int64_t width, int64_t channels) {
  return ImageTensor(torch::zeros({channels, height, width}));
}

ImageTensor normalize_image(const ByteImage& raw) {
  if (raw.channels != 1 && raw.channels != 3) {
    throw_shape("normalize_image", "channels must be 1 or 3");
  }
  if (raw.pixels.size() != static_cast<size_t>(raw.height) * raw.width * raw.channels) {
    throw_shape("normalize_image", "pixel buffer does not match dimensions");
  }
  auto hwc = torch::from_blob(const_cast<std::uint8_t*>(raw.pixels.data()), {raw.height, raw.width, raw.channels},
                              torch::kUInt8)
                 .to(torch::kFloat32);
  return ImageTensor(hwc.permute({2, 0, 1}).contiguous() / 127.5f - 1.0f);
}

ByteImage denormalize_image(const torch::Tensor& chw) {
  if (chw.dim() != 3) throw_shape("denormalize_image", "expected [C,H,W]");
  auto hwc = ((chw.detach().to(torch::kFloat64) + 1.0) * 127.5).round().clamp(0, 255).to(torch::kUInt8);
  hwc = hwc.permute({1, 2, 0}).contiguous();
  ByteImage out;
  out.channels = static_cast<int>(chw.size(0));
  out.height = static_cast<int>(chw.size(1));
  out.width = static_cast<int>(chw.size(2));
  out.pixels.assign(hwc.data_ptr<std::uint8_t>(), hwc.data_ptr<std::uint8_t>() + hwc.numel());
  return out;
}

ByteImage denormalize_image(const ImageTensor& image) { return denormalize_image(image.tensor()); }

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("libpng: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path) : file_(open_file(path, "rb")) {
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      throw FormatError(path.string() + ": not a PNG file");
    }
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    info_ = png_create_info_struct(png_);
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  PngHeader header() const {
    PngHeader h;
    h.width = static_cast<int>(png_get_image_width(png_, info_));
    h.height = static_cast<int>(png_get_image_height(png_, info_));
    h.channels = static_cast<int>(png_get_channels(png_, info_));
    return h;
  }

  ByteImage read_rgb() {
    const auto color = png_get_color_type(png_, info_);
    if (png_get_bit_depth(png_, info_) == 16) png_set_strip_16(png_);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png_);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png_);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png_);
    png_read_update_info(png_, info_);

    ByteImage out;
    out.width = static_cast<int>(png_get_image_width(png_, info_));
    out.height = static_cast<int>(png_get_image_height(png_, info_));
    out.channels = 3;
    out.pixels.resize(static_cast<size_t>(out.width) * out.height * 3);
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + static_cast<size_t>(y) * out.width * 3;
    png_read_image(png_, rows.data());
    return out;
  }

 private:
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

PngHeader read_png_header(const std::filesystem::path& path) { return PngReader(path).header(); }

ByteImage read_png(const std::filesystem::path& path) { return PngReader(path).read_rgb(); }

void write_png(const std::filesystem::path& path, const ByteImage& image) {
  if (image.channels != 1 && image.channels != 3) throw_shape("write_png", "channels must be 1 or 3");
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, image.pixels.data() + static_cast<size_t>(y) * image.width * image.channels);
  }
  png_write_end(png, nullptr);
}

ByteImage make_grid(std::span<const torch::Tensor> images, int columns, int pad) {
  if (images.empty()) throw ValidationError("make_grid: no images");
  columns = std::max(1, std::min<int>(columns, static_cast<int>(images.size())));
  const int rows = static_cast<int>((images.size() + columns - 1) / columns);
  int cell_h = 0;
  int cell_w = 0;
  for (const auto& im : images) {
    cell_h = std::max<int>(cell_h, static_cast<int>(im.size(1)));
    cell_w = std::max<int>(cell_w, static_cast<int>(im.size(2)));
  }
  ByteImage grid;
  grid.channels = 3;
  grid.width = columns * cell_w + (columns + 1) * pad;
  grid.height = rows * cell_h + (rows + 1) * pad;
  grid.pixels.assign(static_cast<size_t>(grid.width) * grid.height * 3, 255);
  for (size_t n = 0; n < images.size(); ++n) {
    auto tile = images[n];
    if (tile.size(0) == 1) tile = tile.expand({3, tile.size(1), tile.size(2)});
    const ByteImage bytes = denormalize_image(tile.contiguous());
    const int oy = pad + static_cast<int>(n / columns) * (cell_h + pad);
    const int ox = pad + static_cast<int>(n % columns) * (cell_w + pad);
    for (int y = 0; y < bytes.height; ++y)
      for (int x = 0; x < bytes.width; ++x)
        for (int c = 0; c < 3; ++c) grid.at(oy + y, ox + x, c) = bytes.at(y, x, c);
  }
  return grid;
}

}  // namespace efgan
