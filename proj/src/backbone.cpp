#include "posemod/backbone.hpp"

#include <cmath>
#include <numbers>

#include "posemod/init.hpp"

namespace posemod {

Backbone::Backbone(std::size_t input_dim, BackboneConfig config, ParameterStore& params, Rng& rng,
                   const std::string& prefix)
    : config_(config), input_dim_(input_dim) {
  if (config_.layers == 0 || config_.width == 0) throw InvalidArgument("empty backbone");
  const std::size_t h = config_.width;
  const double first = config_.omega0 / static_cast<double>(input_dim);
  weights_.push_back(params.add(prefix + "w0", input_dim, h, uniform_values(rng, input_dim * h, first)));
  biases_.push_back(params.add(prefix + "b0", 1, h, uniform_values(rng, h, linear_bound(input_dim))));
  for (std::size_t l = 1; l <= config_.layers; ++l) {
    const std::string i = std::to_string(l);
    weights_.push_back(params.add(prefix + "w" + i, h, h, uniform_values(rng, h * h, sine_bound(h))));
    biases_.push_back(params.add(prefix + "b" + i, 1, h, uniform_values(rng, h, linear_bound(h))));
  }
}

Tensor Backbone::first_layer(const Tensor& xtilde) const {
  if (xtilde.cols() != input_dim_)
    throw ShapeError("backbone input has " + std::to_string(xtilde.cols()) + " columns, expected " +
                     std::to_string(input_dim_));
  return sin(matmul(xtilde, weights_[0]) + biases_[0]);
}

BackboneOutput Backbone::modulated_forward(const Tensor& xtilde,
                                           const std::vector<Tensor>& theta) const {
  if (!theta.empty() && theta.size() != config_.layers)
    throw ShapeError("expected " + std::to_string(config_.layers) + " frequency vectors, got " +
                     std::to_string(theta.size()));
  BackboneOutput out;
  out.f0 = first_layer(xtilde);
  Tensor f = out.f0;
  for (std::size_t l = 1; l <= config_.layers; ++l) {
    Tensor pre = matmul(f, weights_[l]);
    if (!theta.empty()) {
      const Tensor& t = theta[l - 1];
      if (t.rows() != pre.rows() || (t.cols() != pre.cols() && t.cols() != 1))
        throw ShapeError("frequency vector " + to_string(t.shape()) + " does not fit layer " +
                         to_string(pre.shape()));
      pre = t * pre;
    }
    f = sin(pre + biases_[l]);
    out.preactivations.push_back(std::move(pre));
    out.layers.push_back(f);
  }
  out.features = concat_cols(out.layers);
  return out;
}

Tensor direction_embedding(const Tensor& dirs, std::size_t frequencies) {
  if (dirs.cols() != 3) throw ShapeError("directions must be [P, 3]");
  const auto d = dirs.data();
  for (std::size_t r = 0; r < dirs.rows(); ++r) {
    const double n2 = d[3 * r] * d[3 * r] + d[3 * r + 1] * d[3 * r + 1] + d[3 * r + 2] * d[3 * r + 2];
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-9)
      throw InvalidArgument("direction " + std::to_string(r) + " is not unit length");
  }
  std::vector<Tensor> parts;
  for (std::size_t k = 0; k < frequencies; ++k) {
    const Tensor scaled = scale(dirs, std::ldexp(1.0, static_cast<int>(k)));
    parts.push_back(sin(scaled));
    parts.push_back(sin(add_scalar(scaled, std::numbers::pi / 2)));
  }
  return concat_cols(parts);
}

RadianceHead::RadianceHead(std::size_t feature_dim, RadianceConfig config, ParameterStore& params,
                           Rng& rng, const std::string& prefix)
    : config_(config), feature_dim_(feature_dim) {
  const std::size_t emb = 6 * config_.direction_frequencies, h = config_.color_hidden;
  sigma_w_ = params.add(prefix + "sigma/w", feature_dim, 1,
                        uniform_values(rng, feature_dim, linear_bound(feature_dim)));
  sigma_b_ = params.add(prefix + "sigma/b", 1, 1, {config_.density_bias});
  const std::size_t in = feature_dim + emb;
  hidden_w_ = params.add(prefix + "color/w0", in, h, uniform_values(rng, in * h, sine_bound(in)));
  hidden_b_ = params.add(prefix + "color/b0", 1, h, uniform_values(rng, h, linear_bound(in)));
  color_w_ = params.add(prefix + "color/w1", h, 3, uniform_values(rng, h * 3, linear_bound(h)));
  color_b_ = params.add(prefix + "color/b1", 1, 3, std::vector<double>(3, 0.0));
}

Tensor RadianceHead::density(const Tensor& features) const {
  if (features.cols() != feature_dim_) throw ShapeError("radiance head feature width mismatch");
  return softplus(matmul(features, sigma_w_) + sigma_b_);
}

Tensor RadianceHead::color(const Tensor& features, const Tensor& dir_embedding) const {
  const Tensor in = concat_cols(std::vector<Tensor>{features, dir_embedding});
  return sigmoid(matmul(relu(matmul(in, hidden_w_) + hidden_b_), color_w_) + color_b_);
}

RadianceSample RadianceHead::forward(const Tensor& features, const Tensor& dirs) const {
  if (dirs.rows() != features.rows()) throw ShapeError("one direction per feature row expected");
  return {density(features), color(features, direction_embedding(dirs, config_.direction_frequencies))};
}

}  // namespace posemod
