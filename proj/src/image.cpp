#include "posemod/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "posemod/error.hpp"

namespace posemod {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void write_png_bytes(const std::filesystem::path& path, std::size_t w, std::size_t h, int color_type,
                     const std::vector<std::uint8_t>& bytes) {
  ensure_parent(path);
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // No timestamps or text chunks, so identical images give identical files.
  png_write_info(png, info);
  const std::size_t stride = bytes.size() / h;
  for (std::size_t y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Decodes any PNG into 8-bit RGB or gray.
std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, bool gray,
                                         std::size_t& w, std::size_t& h) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw SchemaError(path.string() + " is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw SchemaError("corrupt PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const int ct = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (ct == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (ct & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  const bool is_gray = (ct == PNG_COLOR_TYPE_GRAY || ct == PNG_COLOR_TYPE_GRAY_ALPHA);
  if (gray && !is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (!gray && is_gray) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.resize(stride * h);
  for (std::size_t y = 0; y < h; ++y) png_read_row(png, out.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_binary(const std::filesystem::path& path, const std::vector<char>& bytes) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

constexpr char kHdrMagic[8] = {'P', 'M', 'H', 'D', 'R', '0', '0', '1'};

template <typename T>
void put_le(std::vector<char>& out, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::vector<char>& in, std::size_t at) {
  std::uint32_t u = 0;
  for (std::size_t i = 0; i < 4; ++i)
    u |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return u;
}

}  // namespace

GrayImage luminance(const Image& img) {
  GrayImage g(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels(); ++i)
    g.data[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
  return g;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
  write_png_bytes(path, img.width, img.height, PNG_COLOR_TYPE_RGB, bytes);
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
  write_png_bytes(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, bytes);
}

Image read_png(const std::filesystem::path& path) {
  std::size_t w = 0, h = 0;
  const auto bytes = read_png_bytes(path, false, w, h);
  Image img(w, h);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  std::size_t w = 0, h = 0;
  const auto bytes = read_png_bytes(path, true, w, h);
  GrayImage img(w, h);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_hdr(const std::filesystem::path& path, const Image& img) {
  std::vector<char> out(kHdrMagic, kHdrMagic + 8);
  put_le(out, static_cast<std::uint32_t>(img.width));
  put_le(out, static_cast<std::uint32_t>(img.height));
  put_le(out, std::uint32_t{3});
  for (double v : img.data) put_le(out, static_cast<float>(v));
  write_binary(path, out);
}

Image read_hdr(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  const std::vector<char> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 20 || std::memcmp(in.data(), kHdrMagic, 8) != 0)
    throw SchemaError(path.string() + " is not an HDR dump");
  const std::uint32_t w = get_u32(in, 8), h = get_u32(in, 12), c = get_u32(in, 16);
  if (c != 3 || in.size() != 20 + std::size_t{4} * w * h * c)
    throw SchemaError(path.string() + " has an inconsistent HDR header");
  Image img(w, h);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = std::bit_cast<float>(get_u32(in, 20 + 4 * i));
  return img;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (auto& v : out.data) v = to_byte(v) / 255.0;
  return out;
}

}  // namespace posemod
