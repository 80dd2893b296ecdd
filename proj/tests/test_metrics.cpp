#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "posemod/error.hpp"
#include "posemod/metrics.hpp"
#include "posemod/rng.hpp"

using namespace posemod;

namespace {

Image random_image(Rng& rng, std::size_t w, std::size_t h, double lo = 0, double hi = 1) {
  Image img(w, h);
  for (auto& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

Image gray_to_rgb(const GrayImage& g) {
  Image img(g.width, g.height);
  for (std::size_t i = 0; i < g.data.size(); ++i)
    for (int c = 0; c < 3; ++c) img.data[3 * i + c] = g.data[i];
  return img;
}

FrequencyHistogram random_histogram(Rng& rng, std::size_t bins) {
  FrequencyHistogram h;
  h.bins = bins;
  h.mass.resize(bins);
  double s = 0;
  for (auto& m : h.mass) s += (m = rng.uniform() < 0.3 ? 0.0 : rng.uniform());
  if (s == 0) h.mass[0] = s = 1;
  for (auto& m : h.mass) m /= s;
  return h;
}

}  // namespace

TEST(Psnr, IdenticalImagesGiveSentinel) {
  Rng rng(1);
  const Image a = random_image(rng, 8, 8);
  EXPECT_EQ(psnr(a, a), kPsnrSentinel);
  EXPECT_EQ(kPsnrSentinel, 99.99);
}

TEST(Psnr, UniformDifference) {
  const Image a(10, 7, 0.5), b(10, 7, 0.6);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_NEAR(psnr(Image(4, 4, 0.0), Image(4, 4, 0.5)), 10 * std::log10(4.0), 1e-12);
}

TEST(Psnr, SymmetricAndMaskAware) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Image a = random_image(rng, 12, 9), b = random_image(rng, 12, 9);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    const GrayImage full(12, 9, 1.0);
    EXPECT_EQ(psnr(a, b, &full), psnr(a, b));
  }
  // Differences outside the mask are ignored.
  Image a(4, 4, 0.2), b(4, 4, 0.2);
  GrayImage m(4, 4, 0.0);
  b.at(0, 0, 1) = 0.9;
  m.at(2, 2) = 1.0;
  b.at(2, 2, 0) = 0.3;
  EXPECT_NEAR(psnr(a, b, &m), 10 * std::log10(3.0 / (0.1 * 0.1)), 1e-9);
}

TEST(Psnr, Errors) {
  EXPECT_THROW(psnr(Image(3, 3), Image(3, 4)), InvalidArgument);
  const GrayImage empty(3, 3, 0.0);
  EXPECT_THROW(psnr(Image(3, 3), Image(3, 3, 1.0), &empty), InvalidArgument);
}

TEST(Ssim, SelfSimilarityIsOne) {
  Rng rng(3);
  const Image a = random_image(rng, 24, 20);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
  GrayImage a(32, 32), b(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      a.at(x, y) = (x + y) % 2 ? 1.0 : 0.0;
      b.at(x, y) = 1.0 - a.at(x, y);
    }
  EXPECT_NEAR(ssim(a, b), -1.0, 0.02);
  EXPECT_NEAR(ssim(gray_to_rgb(a), gray_to_rgb(b)), -1.0, 0.02);
}

TEST(Ssim, ConstantShiftProbe) {
  Rng rng(4);
  GrayImage a(40, 40), b(40, 40);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = rng.uniform(0.2, 0.6);
    b.data[i] = a.data[i] + rng.uniform(-0.05, 0.05);
  }
  GrayImage as = a, bs = b;
  for (auto& v : as.data) v += 0.15;
  for (auto& v : bs.data) v += 0.15;
  EXPECT_LT(std::fabs(ssim(a, b) - ssim(as, bs)), 1e-3);
}

TEST(Ssim, RangeAndErrors) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const double s = ssim(random_image(rng, 16, 16), random_image(rng, 16, 16));
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_THROW(ssim(Image(10, 20), Image(10, 20)), InvalidArgument);
  EXPECT_THROW(ssim(Image(20, 20), Image(21, 20)), InvalidArgument);
}

TEST(FrequencyMap, ConstantImageIsZero) {
  const GrayImage f = frequency_map(Image(9, 9, 0.37));
  for (double v : f.data) EXPECT_EQ(v, 0.0);
}

TEST(FrequencyMap, SingleWhitePixel) {
  GrayImage g(11, 11, 0.0);
  g.at(5, 5) = 1.0;
  const GrayImage f = frequency_map(g);
  EXPECT_NEAR(f.at(5, 5), std::sqrt(24.0) / 25.0, 1e-12);
  EXPECT_NEAR(f.at(5, 5), 0.19596, 1e-5);
  EXPECT_NEAR(f.at(7, 7), std::sqrt(24.0) / 25.0, 1e-12);
  EXPECT_EQ(f.at(0, 0), 0.0);
}

TEST(FrequencyMap, ClampedBorders) {
  // A white corner pixel is replicated into a 3x3 block of the padded 5x5 patch.
  GrayImage g(8, 8, 0.0);
  g.at(0, 0) = 1.0;
  const double p = 9.0 / 25.0;
  EXPECT_NEAR(frequency_map(g).at(0, 0), std::sqrt(p * (1 - p)), 1e-12);
}

TEST(FrequencyMap, StepEdgeTranslationCovariance) {
  auto edge = [](std::size_t at) {
    GrayImage g(20, 6);
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = at; x < 20; ++x) g.at(x, y) = 1.0;
    return frequency_map(g);
  };
  const GrayImage a = edge(8), b = edge(11);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 3; x + 3 < 17; ++x) EXPECT_NEAR(b.at(x + 3, y), a.at(x, y), 1e-12);
}

TEST(FrequencyMap, Homogeneity) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    GrayImage g(10, 10);
    for (auto& v : g.data) v = rng.uniform();
    const double alpha = rng.uniform(0.1, 5);
    GrayImage s = g;
    for (auto& v : s.data) v *= alpha;
    const GrayImage fg = frequency_map(g), fs = frequency_map(s);
    for (std::size_t i = 0; i < fg.data.size(); ++i) {
      ASSERT_GE(fg.data[i], 0.0);
      ASSERT_NEAR(fs.data[i], alpha * fg.data[i], 1e-12);
    }
  }
}

TEST(Histogram, MassSumsToOneAndClampsTop) {
  Rng rng(7);
  GrayImage m(30, 30);
  for (auto& v : m.data) v = rng.uniform(0, 0.5);
  const FrequencyHistogram h = frequency_histogram(m);
  EXPECT_EQ(h.bins, 32u);
  double total = 0;
  for (double v : h.mass) {
    EXPECT_GE(v, 0.0);
    total += v;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_GT(h.mass.back(), 0.3);
  GrayImage mask(30, 30, 0.0);
  mask.at(3, 3) = 1;
  m.at(3, 3) = 0.001;
  const FrequencyHistogram one = frequency_histogram(m, 32, 0.3, &mask);
  EXPECT_EQ(one.mass[0], 1.0);
  EXPECT_THROW(frequency_histogram(m, 0), InvalidArgument);
}

TEST(FDist, IdenticalDisjointAndMismatch) {
  FrequencyHistogram a, b;
  a.mass.assign(32, 0.0);
  b.mass.assign(32, 0.0);
  a.mass[0] = 1;
  b.mass[5] = 0.5;
  b.mass[31] = 0.5;
  EXPECT_EQ(f_dist(a, a), 0.0);
  EXPECT_NEAR(f_dist(a, b), 2.0, 1e-15);
  FrequencyHistogram c = a;
  c.bins = 16;
  c.mass.resize(16);
  EXPECT_THROW(f_dist(a, c), InvalidArgument);
}

TEST(FDist, TriangleInequalityAndSymmetry) {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = random_histogram(rng, 32), y = random_histogram(rng, 32), z = random_histogram(rng, 32);
    ASSERT_LE(f_dist(x, z), f_dist(x, y) + f_dist(y, z) + 1e-12);
    ASSERT_EQ(f_dist(x, y), f_dist(y, x));
    ASSERT_GE(f_dist(x, y), 0.0);
    ASSERT_LE(f_dist(x, y), 2.0 + 1e-12);
  }
}

TEST(FDist, FrequencyDistanceOfImages) {
  Rng rng(9);
  const Image a = random_image(rng, 16, 16);
  EXPECT_EQ(frequency_distance(a, a), 0.0);
  EXPECT_GT(frequency_distance(Image(16, 16, 0.5), a), 1.0);
}

TEST(Maps, ErrorAndFrequencyImages) {
  const Image a(4, 4, 0.5);
  Image b = a;
  b.at(1, 1, 0) = b.at(1, 1, 1) = b.at(1, 1, 2) = 1.0;
  const Image e = error_map(a, b, 0.5);
  // Equal pixels are white, the brighter reference pixel renders blue.
  EXPECT_EQ(e.at(0, 0, 0), 1.0);
  EXPECT_EQ(e.at(0, 0, 2), 1.0);
  EXPECT_LT(e.at(1, 1, 0), 0.5);
  EXPECT_EQ(e.at(1, 1, 2), 1.0);
  GrayImage f(2, 1);
  f.data = {0.15, 0.6};
  const GrayImage fi = frequency_map_image(f, 0.3);
  EXPECT_DOUBLE_EQ(fi.data[0], 0.5);
  EXPECT_EQ(fi.data[1], 1.0);
}

TEST(ImageIo, PngAndHdrRoundTrip) {
  Rng rng(10);
  const Image a = random_image(rng, 7, 5);
  const auto dir = std::filesystem::temp_directory_path() / "posemod_test_images";
  write_png(dir / "a.png", a);
  write_hdr(dir / "a.hdr", a);
  const Image p = read_png(dir / "a.png");
  const Image h = read_hdr(dir / "a.hdr");
  EXPECT_EQ(p.data, quantize8(a).data);
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(h.data[i], static_cast<double>(static_cast<float>(a.data[i])));
  GrayImage g(3, 2);
  g.data = {0, 0.25, 0.5, 0.75, 1, 1};
  write_png(dir / "g.png", g);
  const GrayImage gr = read_png_gray(dir / "g.png");
  for (std::size_t i = 0; i < g.data.size(); ++i) EXPECT_EQ(gr.data[i], std::round(g.data[i] * 255) / 255);
  EXPECT_THROW(read_png(dir / "missing.png"), IoError);
  EXPECT_THROW(read_png(dir / "a.hdr"), SchemaError);
  std::filesystem::remove_all(dir);
}
