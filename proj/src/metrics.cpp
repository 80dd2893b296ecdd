#include "posemod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posemod/error.hpp"

namespace posemod {

namespace {

void require_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidArgument("image sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                          " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
}

constexpr int kSsimRadius = 5;

std::vector<double> gaussian_kernel() {
  std::vector<double> k(2 * kSsimRadius + 1);
  double total = 0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    k[i + kSsimRadius] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
    total += k[i + kSsimRadius];
  }
  for (auto& v : k) v /= total;
  return k;
}

// Separable 'valid' filtering of a single-channel image.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t w, std::size_t h,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(ow * h), out(ow * oh);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * img[y * w + x + i];
      tmp[y * ow + x] = s;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, const GrayImage* mask, double peak) {
  require_same_size(a, b);
  if (mask && (mask->width != a.width || mask->height != a.height))
    throw InvalidArgument("mask size differs from the images");
  // Neumaier-compensated sum of squared errors.
  double sse = 0, carry = 0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    if (mask && !(mask->data[p] > 0.5)) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = a.data[3 * p + c] - b.data[3 * p + c];
      const double sq = d * d, t = sse + sq;
      carry += std::fabs(sse) >= sq ? (sse - t) + sq : (sq - t) + sse;
      sse = t;
    }
    count += 3;
  }
  if (count == 0) throw InvalidArgument("empty PSNR mask");
  const double mse = (sse + carry) / static_cast<double>(count);
  if (mse == 0.0) return kPsnrSentinel;
  return std::min(kPsnrSentinel, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidArgument("image sizes differ");
  const std::size_t win = 2 * kSsimRadius + 1;
  if (a.width < win || a.height < win)
    throw InvalidArgument("SSIM needs images of at least " + std::to_string(win) + "x" + std::to_string(win));
  const auto k = gaussian_kernel();
  const std::size_t w = a.width, h = a.height, n = w * h;
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.data[i] * a.data[i];
    bb[i] = b.data[i] * b.data[i];
    ab[i] = a.data[i] * b.data[i];
  }
  const auto mu_a = filter_valid(a.data, w, h, k), mu_b = filter_valid(b.data, w, h, k);
  const auto s_aa = filter_valid(aa, w, h, k), s_bb = filter_valid(bb, w, h, k), s_ab = filter_valid(ab, w, h, k);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = s_aa[i] - mu_a[i] * mu_a[i], vb = s_bb[i] - mu_b[i] * mu_b[i];
    const double cov = s_ab[i] - mu_a[i] * mu_b[i];
    total += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim(const Image& a, const Image& b) {
  require_same_size(a, b);
  return ssim(luminance(a), luminance(b));
}

GrayImage frequency_map(const GrayImage& img) {
  GrayImage out(img.width, img.height);
  const auto w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      // Offsets from the centre value, so flat patches give exactly zero.
      const double centre = img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      double patch[25];
      int k = 0;
      double s = 0;
      for (long dy = -2; dy <= 2; ++dy)
        for (long dx = -2; dx <= 2; ++dx) {
          patch[k] = img.at(static_cast<std::size_t>(std::clamp(x + dx, 0L, w - 1)),
                            static_cast<std::size_t>(std::clamp(y + dy, 0L, h - 1))) - centre;
          s += patch[k++];
        }
      const double mean = s / 25.0;
      double ss = 0;
      for (double v : patch) ss += (v - mean) * (v - mean);
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = std::sqrt(ss / 25.0);
    }
  return out;
}

GrayImage frequency_map(const Image& img) { return frequency_map(luminance(img)); }

FrequencyHistogram frequency_histogram(const GrayImage& map, std::size_t bins, double max_value,
                                       const GrayImage* mask) {
  if (bins == 0 || !(max_value > 0)) throw InvalidArgument("histogram needs bins and a positive range");
  FrequencyHistogram h{bins, max_value, std::vector<double>(bins, 0.0)};
  std::size_t count = 0;
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    if (mask && !(mask->data[i] > 0.5)) continue;
    const double v = std::max(0.0, map.data[i]);
    const auto b = std::min(bins - 1, static_cast<std::size_t>(v / max_value * static_cast<double>(bins)));
    h.mass[b] += 1.0;
    ++count;
  }
  if (count == 0) throw InvalidArgument("empty histogram");
  for (auto& m : h.mass) m /= static_cast<double>(count);
  return h;
}

double f_dist(const FrequencyHistogram& a, const FrequencyHistogram& b) {
  if (a.bins != b.bins || a.max_value != b.max_value || a.mass.size() != b.mass.size())
    throw InvalidArgument("histograms use different binning");
  double d = 0;
  for (std::size_t i = 0; i < a.mass.size(); ++i) d += std::abs(a.mass[i] - b.mass[i]);
  return d;
}

double frequency_distance(const Image& output, const Image& reference) {
  require_same_size(output, reference);
  return f_dist(frequency_histogram(frequency_map(output)), frequency_histogram(frequency_map(reference)));
}

Image error_map(const Image& a, const Image& b, double range) {
  require_same_size(a, b);
  const GrayImage la = luminance(a), lb = luminance(b);
  Image out(a.width, a.height);
  for (std::size_t i = 0; i < a.pixels(); ++i) {
    const double t = std::clamp((la.data[i] - lb.data[i]) / range, -1.0, 1.0);
    const double r = t < 0 ? 1 + t : 1.0, g = 1 - std::abs(t), bl = t > 0 ? 1 - t : 1.0;
    out.data[3 * i] = r;
    out.data[3 * i + 1] = g;
    out.data[3 * i + 2] = bl;
  }
  return out;
}

GrayImage frequency_map_image(const GrayImage& map, double max_value) {
  GrayImage out = map;
  for (auto& v : out.data) v = std::clamp(v / max_value, 0.0, 1.0);
  return out;
}

}  // namespace posemod
