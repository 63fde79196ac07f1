#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nspl/types.hpp"

namespace nspl {

/// Interleaved linear RGB image in double precision.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, const Rgb& fill = Rgb::Zero());

  std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
  double* px(int x, int y) { return data.data() + 3 * (std::size_t(y) * width + x); }
  const double* px(int x, int y) const { return data.data() + 3 * (std::size_t(y) * width + x); }
  Rgb pixel(int x, int y) const {
    const double* p = px(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, const Rgb& c) {
    double* p = px(x, y);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
  Image clamped() const;
};

/// 8-bit encoding used at the PNG boundary: round(255 * clamp(x)^(1/2.2)).
std::uint8_t encode_srgb8(double linear);
double decode_srgb8(std::uint8_t v);

/// Writes an 8-bit RGB PNG of the clamped, gamma-encoded image.
void write_png(const std::filesystem::path& path, const Image& img);

/// Reads an 8/16-bit PNG (gray, RGB, with or without alpha) into linear RGB,
/// compositing any alpha channel over `background`.
Image read_png(const std::filesystem::path& path, const Rgb& background = Rgb::Zero());

/// Low-level 8-bit PNG writer; `channels` is 3 (RGB) or 4 (RGBA).
void write_png_bytes(const std::filesystem::path& path, int width, int height, int channels,
                     const std::vector<std::uint8_t>& bytes);

/// Raw float dump: "NSRF", u32 width, u32 height, u32 channels (3), then
/// little-endian float32 samples.
void write_raw(const std::filesystem::path& path, const Image& img);
Image read_raw(const std::filesystem::path& path);

/// Box-filter downscale by an integer factor (floor of the size).
Image downscale(const Image& img, int factor);

}  // namespace nspl
