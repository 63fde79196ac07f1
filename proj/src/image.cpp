#include "nspl/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

namespace nspl {

namespace {

constexpr double kGamma = 2.2;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  return f;
}

const std::array<double, 256>& decode_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = std::pow(i / 255.0, kGamma);
    return t;
  }();
  return table;
}

}  // namespace

Image::Image(int w, int h, const Rgb& fill) : width(w), height(h), data(std::size_t(w) * h * 3) {
  if (w < 0 || h < 0) throw std::invalid_argument("Image: negative size");
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    data[3 * i] = fill[0];
    data[3 * i + 1] = fill[1];
    data[3 * i + 2] = fill[2];
  }
}

Image Image::clamped() const {
  Image out = *this;
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::uint8_t encode_srgb8(double linear) {
  const double x = std::clamp(std::isfinite(linear) ? linear : 0.0, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * std::pow(x, 1.0 / kGamma)));
}

double decode_srgb8(std::uint8_t v) { return decode_table()[v]; }

void write_png_bytes(const std::filesystem::path& path, int width, int height, int channels,
                     const std::vector<std::uint8_t>& bytes) {
  if (channels != 3 && channels != 4) throw std::invalid_argument("write_png: channels must be 3 or 4");
  if (bytes.size() != std::size_t(width) * height * channels) {
    throw std::invalid_argument("write_png: buffer size mismatch");
  }
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng error writing '" + path.string() + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + std::size_t(y) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = encode_srgb8(img.data[i]);
  write_png_bytes(path, img.width, img.height, 3, bytes);
}

Image read_png(const std::filesystem::path& path, const Rgb& background) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error("read_png: '" + path.string() + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng error reading '" + path.string() + "'");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  std::vector<std::uint8_t> bytes(std::size_t(width) * height * channels);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + std::size_t(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(width, height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const std::uint8_t* p = bytes.data() + i * channels;
    const double alpha = channels == 4 ? p[3] / 255.0 : 1.0;
    for (int c = 0; c < 3; ++c) {
      img.data[3 * i + c] = alpha * decode_srgb8(p[c]) + (1.0 - alpha) * background[c];
    }
  }
  return img;
}

void write_raw(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const std::uint32_t header[3] = {std::uint32_t(img.width), std::uint32_t(img.height), 3u};
  out.write("NSRF", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  std::vector<float> samples(img.data.begin(), img.data.end());
  out.write(reinterpret_cast<const char*>(samples.data()), std::streamsize(samples.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write_raw: failed writing '" + path.string() + "'");
}

Image read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  char magic[4];
  std::uint32_t header[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(magic, "NSRF", 4) != 0 || header[2] != 3) {
    throw std::runtime_error("read_raw: '" + path.string() + "' is not a raw RGB dump");
  }
  Image img(static_cast<int>(header[0]), static_cast<int>(header[1]));
  std::vector<float> samples(img.data.size());
  in.read(reinterpret_cast<char*>(samples.data()), std::streamsize(samples.size() * sizeof(float)));
  if (!in) throw std::runtime_error("read_raw: truncated file '" + path.string() + "'");
  std::copy(samples.begin(), samples.end(), img.data.begin());
  return img;
}

Image downscale(const Image& img, int factor) {
  if (factor < 1) throw std::invalid_argument("downscale: factor must be >= 1");
  if (factor == 1) return img;
  Image out(img.width / factor, img.height / factor);
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      Rgb acc = Rgb::Zero();
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) acc += img.pixel(x * factor + dx, y * factor + dy);
      }
      out.set(x, y, acc * norm);
    }
  }
  return out;
}

}  // namespace nspl
