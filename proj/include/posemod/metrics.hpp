#pragma once

#include <vector>

#include "posemod/image.hpp"

namespace posemod {

// Value reported for identical images, where the true PSNR is infinite.
inline constexpr double kPsnrSentinel = 99.99;

// 10 log10(peak^2 / MSE) over all channels, restricted to mask > 0.5 when a mask is given.
// Identical inputs give kPsnrSentinel.
double psnr(const Image& a, const Image& b, const GrayImage* mask = nullptr, double peak = 1.0);

// Gaussian-window SSIM (11x11, sigma 1.5) on luminance, averaged over window positions that fit
// entirely inside the image. Throws InvalidArgument for images smaller than the window.
double ssim(const Image& a, const Image& b);
double ssim(const GrayImage& a, const GrayImage& b);

// Population standard deviation of each pixel's 5x5 luminance neighbourhood, edges clamped.
GrayImage frequency_map(const Image& img);
GrayImage frequency_map(const GrayImage& img);

struct FrequencyHistogram {
  std::size_t bins = 32;
  double max_value = 0.3;  // values at or above land in the last bin
  std::vector<double> mass;  // sums to 1
};

FrequencyHistogram frequency_histogram(const GrayImage& map, std::size_t bins = 32,
                                       double max_value = 0.3, const GrayImage* mask = nullptr);

// L1 distance between normalised histograms, in [0, 2]. Throws InvalidArgument when the
// binning differs.
double f_dist(const FrequencyHistogram& a, const FrequencyHistogram& b);

// Histogram F-Dist between the frequency maps of two images.
double frequency_distance(const Image& output, const Image& reference);

// Blue (negative) - white - red (positive) rendering of luminance(a) - luminance(b).
Image error_map(const Image& a, const Image& b, double range = 0.5);
// Frequency map scaled so `max_value` maps to white.
GrayImage frequency_map_image(const GrayImage& map, double max_value = 0.3);

}  // namespace posemod
