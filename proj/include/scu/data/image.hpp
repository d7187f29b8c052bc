#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "scu/core/kernels.hpp"

namespace scu {

// Channels-first float image with values in [-1, 1].
using ImageTensor = Tensor<float>;

struct ImageSize {
  int height = 0;
  int width = 0;
  bool operator==(const ImageSize&) const = default;
};

inline constexpr int kMinRegionArea = 16;

// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max).
struct RegionBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool contains(int x, int y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
  bool fits(ImageSize s) const {
    return 0 <= x_min && x_min < x_max && x_max <= s.width && 0 <= y_min && y_min < y_max && y_max <= s.height;
  }
  bool operator==(const RegionBox&) const = default;

  std::string str() const {
    return "(" + std::to_string(x_min) + "," + std::to_string(y_min) + "," + std::to_string(x_max) + "," +
           std::to_string(y_max) + ")";
  }
};

inline void require_box_in(const RegionBox& b, ImageSize s, const char* what) {
  if (!b.fits(s))
    throw BoundsError(std::string(what) + ": box " + b.str() + " outside image " + std::to_string(s.height) + "x" +
                      std::to_string(s.width));
}

// Box usable as a generation target: in bounds and at least kMinRegionArea pixels.
inline void require_region(const RegionBox& b, ImageSize s, const char* what) {
  require_box_in(b, s, what);
  if (b.area() < kMinRegionArea)
    throw BoundsError(std::string(what) + ": region " + b.str() + " smaller than " + std::to_string(kMinRegionArea) +
                      " pixels");
}

inline ImageSize size_of(const ImageTensor& img) { return {img.dim(1), img.dim(2)}; }

// Binary [1, H, W] mask, 1 exactly on the box.
using RegionMask = Tensor<float>;

inline RegionMask box_to_mask(const RegionBox& box, ImageSize size) {
  require_box_in(box, size, "box_to_mask");
  RegionMask m({1, size.height, size.width});
  for (int y = box.y_min; y < box.y_max; ++y)
    for (int x = box.x_min; x < box.x_max; ++x) m(0, y, x) = 1.0f;
  return m;
}

// Tight bounding box of the non-zero mask pixels, if any.
inline std::optional<RegionBox> mask_to_box(const RegionMask& mask) {
  const int h = mask.dim(1), w = mask.dim(2);
  RegionBox b{w, h, -1, -1};
  bool any = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask(0, y, x) != 0.0f) {
        any = true;
        b.x_min = std::min(b.x_min, x);
        b.y_min = std::min(b.y_min, y);
        b.x_max = std::max(b.x_max, x + 1);
        b.y_max = std::max(b.y_max, y + 1);
      }
  if (!any) return std::nullopt;
  return b;
}

inline void validate_image(const ImageTensor& img, const char* what) {
  if (img.rank() != 3) throw DimensionError(std::string(what) + ": image must be [C,H,W], got " + shape_str(img.shape));
  const int c = img.dim(0);
  if (c != 1 && c != 3 && c != 6) throw DimensionError(std::string(what) + ": channel count must be 1, 3 or 6");
  if (img.dim(1) < 8 || img.dim(2) < 8) throw DimensionError(std::string(what) + ": image smaller than 8x8");
  for (float v : img.data)
    if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
      throw DataError(std::string(what) + ": pixel value outside [-1, 1]");
}

inline float byte_to_unit(std::uint8_t b) { return static_cast<float>(b / 127.5 - 1.0); }

inline std::uint8_t unit_to_byte(float v) {
  const double b = std::round((static_cast<double>(std::clamp(v, -1.0f, 1.0f)) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(b, 0.0, 255.0));
}

// One application of the 8-bit storage quantisation.
inline ImageTensor quantize(const ImageTensor& img) {
  ImageTensor out = img;
  for (auto& v : out.data) v = byte_to_unit(unit_to_byte(v));
  return out;
}

inline ImageTensor resize_bilinear(const ImageTensor& img, int h, int w) {
  return kernels::resize_bilinear_forward(img, h, w);
}

inline ImageTensor crop(const ImageTensor& img, const RegionBox& box) {
  require_box_in(box, size_of(img), "crop");
  ImageTensor out({img.dim(0), box.height(), box.width()});
  for (int c = 0; c < img.dim(0); ++c)
    for (int y = box.y_min; y < box.y_max; ++y)
      for (int x = box.x_min; x < box.x_max; ++x) out(c, y - box.y_min, x - box.x_min) = img(c, y, x);
  return out;
}

// ---------------------------------------------------------------- PNG

// Writes a 3-channel image as 8-bit RGB PNG.
inline void write_png(const std::filesystem::path& path, const ImageTensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw DimensionError("write_png: expected [3,H,W], got " + shape_str(img.shape));
  const int h = img.dim(1), w = img.dim(2);
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] = unit_to_byte(img(c, y, x));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, rgb.data(), 0, nullptr))
    throw LoadError("cannot write " + path.string() + ": " + image.message);
}

inline ImageTensor read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw LoadError("cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw LoadError("cannot decode " + path.string() + ": " + image.message);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  ImageTensor img({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img(c, y, x) = byte_to_unit(rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
  return img;
}

}  // namespace scu
