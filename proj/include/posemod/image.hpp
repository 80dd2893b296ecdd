#pragma once

#include <filesystem>
#include <vector>

namespace posemod {

// Interleaved RGB, row-major, values nominally in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), data(w * h * 3, fill) {}
  double& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * 3 + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const { return data[(y * width + x) * 3 + c]; }
  std::size_t pixels() const { return width * height; }
};

// Single-channel map.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), data(w * h, fill) {}
  double& at(std::size_t x, std::size_t y) { return data[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
};

// Rec. 601 weights.
GrayImage luminance(const Image& img);

// 8-bit PNG. Values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);
Image read_png(const std::filesystem::path& path);
GrayImage read_png_gray(const std::filesystem::path& path);

// Raw float32 dump: "PMHDR001", u32 width, u32 height, u32 channels, little-endian floats.
void write_hdr(const std::filesystem::path& path, const Image& img);
Image read_hdr(const std::filesystem::path& path);

// Rounds through 8 bits, as a PNG round trip would.
Image quantize8(const Image& img);

}  // namespace posemod
