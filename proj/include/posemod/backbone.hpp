#pragma once

#include <string>
#include <vector>

#include "posemod/rng.hpp"
#include "posemod/tensor.hpp"

namespace posemod {

struct BackboneConfig {
  std::size_t layers = 4;  // n modulated layers
  std::size_t width = 64;  // H
  double omega0 = 30.0;  // first-layer frequency, folded into its weights
};

struct BackboneOutput {
  Tensor f0;  // [P, H]
  std::vector<Tensor> preactivations;  // theta_l * (f_{l-1} W_l), before the bias
  std::vector<Tensor> layers;  // f_1 .. f_n
  Tensor features;  // S = [f_1, ..., f_n], [P, n*H]
};

// f0 = sin(x̃ W0 + b0); f_l = sin(theta_l * (f_{l-1} W_l) + b_l).
class Backbone {
 public:
  Backbone(std::size_t input_dim, BackboneConfig config, ParameterStore& params, Rng& rng,
           const std::string& prefix = "backbone/");

  Tensor first_layer(const Tensor& xtilde) const;
  // Empty `theta` runs the unmodulated network. Each entry is [P, H] or [P, 1].
  BackboneOutput modulated_forward(const Tensor& xtilde, const std::vector<Tensor>& theta) const;

  const BackboneConfig& config() const { return config_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return config_.layers * config_.width; }
  std::vector<std::size_t> layer_widths() const {
    return std::vector<std::size_t>(config_.layers, config_.width);
  }
  const Tensor& weight(std::size_t layer) const { return weights_.at(layer); }
  const Tensor& bias(std::size_t layer) const { return biases_.at(layer); }

 private:
  BackboneConfig config_;
  std::size_t input_dim_;
  std::vector<Tensor> weights_;  // W0 .. Wn
  std::vector<Tensor> biases_;
};

struct RadianceConfig {
  std::size_t color_hidden = 64;
  std::size_t direction_frequencies = 4;
  double density_bias = -1.0;
};

struct RadianceSample {
  Tensor sigma;  // [P, 1]
  Tensor color;  // [P, 3]
};

// [sin(2^k d), cos(2^k d)] for k < frequencies, [P, 6 * frequencies]. Rows must be unit vectors.
Tensor direction_embedding(const Tensor& dirs, std::size_t frequencies);

// sigma = softplus(S W_s + b_s); color = sigmoid(relu([S, emb(d)] W_h + b_h) W_c + b_c).
class RadianceHead {
 public:
  RadianceHead(std::size_t feature_dim, RadianceConfig config, ParameterStore& params, Rng& rng,
               const std::string& prefix = "radiance/");

  RadianceSample forward(const Tensor& features, const Tensor& dirs) const;
  Tensor density(const Tensor& features) const;
  Tensor color(const Tensor& features, const Tensor& dir_embedding) const;

  const RadianceConfig& config() const { return config_; }

 private:
  RadianceConfig config_;
  std::size_t feature_dim_;
  Tensor sigma_w_, sigma_b_;
  Tensor hidden_w_, hidden_b_, color_w_, color_b_;
};

}  // namespace posemod
