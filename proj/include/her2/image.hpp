#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

// Plain in-memory rasters. Row-major, origin top-left.
namespace her2 {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {255, 255, 255});

  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
  Rgb at(int x, int y) const noexcept {
    const auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
};

// Scalar field, e.g. one stain concentration.
struct Field {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Field() = default;
  Field(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const noexcept { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) noexcept { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const noexcept;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Throws Error(shape) when the rectangle leaves the image.
RgbImage crop(const RgbImage& img, int x, int y, int w, int h);
// Box-filter downscale / bilinear upscale to the requested size.
RgbImage resize(const RgbImage& img, int w, int h);
// ITU-R BT.601 luma, rounded.
GrayImage to_gray(const RgbImage& img);

// PNG (via libpng) and baseline uncompressed 8-bit RGB TIFF. Errors are
// Error(io) for file problems and Error(format) for undecodable content.
RgbImage read_png(const std::filesystem::path& path);
RgbImage decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const RgbImage& img);
std::vector<std::uint8_t> encode_png(const RgbImage& img);

RgbImage read_tiff(const std::filesystem::path& path);
RgbImage decode_tiff(std::span<const std::uint8_t> bytes);
void write_tiff(const std::filesystem::path& path, const RgbImage& img);
std::vector<std::uint8_t> encode_tiff(const RgbImage& img);

// Dispatch on file signature (read) or extension (write).
RgbImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const RgbImage& img);
bool is_image_file(const std::filesystem::path& path);

// Width/height from a PNG IHDR without decoding pixels.
std::pair<int, int> png_dimensions(const std::filesystem::path& path);

}  // namespace her2
