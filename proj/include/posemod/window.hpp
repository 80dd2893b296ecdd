#pragma once

#include <string>
#include <vector>

#include "posemod/rng.hpp"
#include "posemod/skeleton.hpp"
#include "posemod/tensor.hpp"

namespace posemod {

enum class WindowMode { Full, OnlySpatial, OnlyFeature, NoWindow };

std::string to_string(WindowMode mode);
WindowMode parse_window_mode(const std::string& text);

struct WindowConfig {
  double alpha = 2.0;
  double beta = 6.0;
  WindowMode mode = WindowMode::Full;
  std::size_t fourier_dim = 16;  // rows of W_c
  double fourier_bandwidth = 10.0;  // std of the Gaussian W_c init
  bool fourier_trainable = false;
  std::size_t part_feature_dim = 32;  // D_f
  std::size_t window_hidden = 32;
  std::size_t freq_hidden = 32;
  // One coefficient per channel of each layer; false gives one scalar per layer.
  bool theta_per_channel = true;
  double theta_init_noise = 0.01;
};

// Per-part point features for a batch of points. Each entry is [points, ...].
struct PartPointFeatures {
  std::vector<Tensor> xdot;  // sin(x̄ W_c), [P, fourier_dim]
  std::vector<Tensor> fp;  // [P, D_f]
  std::vector<Tensor> fw;  // fp scaled by the spatial window, [P, D_f]
};

// Pose-dependent quantities shared by every query point of one pose.
struct WindowPoseContext {
  Tensor bone_features;  // G, [bones, D_g]
  Tensor feature_bias;  // G W_g + b per bone, [bones, D_f]
};

struct WindowOutput {
  Tensor wp;  // [P, bones]
  Tensor wf;  // [P, bones]
  Tensor w;  // [P, bones]
  Tensor fm;  // [P, D_g]
  std::vector<Tensor> theta;  // one per backbone layer; empty when frequencies are not predicted
  Tensor xtilde;  // [P, 3 * bones]
  PartPointFeatures features;
};

// exp(-alpha * ||x̄||^beta) per part, zeroed for invalid parts. `valid_mask` is [P, bones] of
// 0/1 values (may be undefined to skip masking).
Tensor spatial_window(const std::vector<Tensor>& xbar, const Tensor& valid_mask, double alpha,
                      double beta);
// x̃_i = x̄_i * w_i, concatenated to [P, 3 * bones].
Tensor reweight_positions(const std::vector<Tensor>& xbar, const Tensor& w);
// 0/1 mask [P, bones] from RelativeCoords validity flags, restricted to `rows` when non-empty.
Tensor validity_mask(const RelativeCoords& rc, const std::vector<std::size_t>& rows = {});

class WindowFunction {
 public:
  // `layer_widths`: hidden width of each modulated backbone layer (one theta vector per entry).
  WindowFunction(std::size_t bones, std::size_t bone_feature_dim,
                 std::vector<std::size_t> layer_widths, WindowConfig config,
                 ParameterStore& params, Rng& rng, const std::string& prefix = "window/");

  WindowPoseContext prepare(const Tensor& bone_features) const;

  PartPointFeatures part_point_features(const std::vector<Tensor>& xbar, const Tensor& wp,
                                        const WindowPoseContext& ctx) const;
  // Max-pool over parts -> two FC layers -> sigmoid, [P, bones].
  Tensor feature_window(const PartPointFeatures& features) const;
  // Applies the mode: Full w = wp*wf, OnlySpatial w = wp, OnlyFeature w = wf, NoWindow w = 1;
  // always zero on invalid parts.
  Tensor combine(const Tensor& wp, const Tensor& wf, const Tensor& valid_mask) const;
  // f^m = sum_i w_i G_i and theta = MLP(f^m).
  Tensor aggregate(const Tensor& w, const Tensor& bone_features) const;
  std::vector<Tensor> predict_frequencies(const Tensor& fm) const;

  // Full forward for a batch; theta is skipped when `predict_theta` is false.
  WindowOutput forward(const std::vector<Tensor>& xbar, const Tensor& valid_mask,
                       const WindowPoseContext& ctx, bool predict_theta) const;

  const WindowConfig& config() const { return config_; }
  void set_mode(WindowMode mode) { config_.mode = mode; }
  const Tensor& fourier_weights() const { return w_c_; }

 private:
  WindowConfig config_;
  std::size_t bones_;
  std::vector<std::size_t> layer_widths_;
  Tensor w_c_;
  Tensor fp_wx_, fp_wg_, fp_b_;
  Tensor fw1_w_, fw1_b_, fw2_w_, fw2_b_;
  Tensor fq1_w_, fq1_b_, fq2_w_, fq2_b_;
};

}  // namespace posemod
