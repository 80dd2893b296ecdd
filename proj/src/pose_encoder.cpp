#include "posemod/pose_encoder.hpp"

#include "posemod/init.hpp"

namespace posemod {

std::vector<double> bone_adjacency(const SkeletonTopology& topo) {
  const std::size_t n = topo.bone_count();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    a[i * n + i] = 1.0;
    if (topo.parent[i] >= 0) {
      const auto p = static_cast<std::size_t>(topo.parent[i]);
      a[i * n + p] = 1.0;
      a[p * n + i] = 1.0;
    }
  }
  return a;
}

std::vector<double> normalized_adjacency(const SkeletonTopology& topo) {
  const std::size_t n = topo.bone_count();
  std::vector<double> a = bone_adjacency(topo);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= deg;
  }
  return a;
}

std::vector<double> neighbor_mean_matrix(const SkeletonTopology& topo) {
  const std::size_t n = topo.bone_count();
  std::vector<double> a = bone_adjacency(topo);
  for (std::size_t i = 0; i < n; ++i) {
    a[i * n + i] = 0.0;
    double deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
    if (deg > 0)
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= deg;
  }
  return a;
}

PoseEncoder::PoseEncoder(const SkeletonTopology& topo, PoseEncoderConfig config,
                         ParameterStore& params, Rng& rng, const std::string& prefix)
    : config_(config), bones_(topo.bone_count()) {
  neighbor_mean_ = Tensor::from(bones_, bones_, neighbor_mean_matrix(topo));
  std::size_t in = 6;
  for (int l = 0; l < 2; ++l) {
    const std::string p = prefix + "conv" + std::to_string(l) + "/";
    const std::size_t out = config_.conv_width;
    // Self and neighbour terms share the fan-in budget.
    const double bound = sine_bound(2 * in);
    Conv c;
    c.w_self = params.add(p + "w_self", in, out, uniform_values(rng, in * out, bound));
    c.w_nbr = params.add(p + "w_nbr", in, out, uniform_values(rng, in * out, bound));
    c.bias = params.add(p + "bias", 1, out, uniform_values(rng, out, linear_bound(in)));
    convs_.push_back(c);
    in = out;
  }
  for (std::size_t b = 0; b < bones_; ++b) {
    const std::string p = prefix + "mlp/" + topo.names[b] + "/";
    const std::size_t h = config_.mlp_width, d = config_.feature_dim;
    NodeMlp m;
    m.w0 = params.add(p + "w0", in, h, uniform_values(rng, in * h, sine_bound(in)));
    m.b0 = params.add(p + "b0", 1, h, uniform_values(rng, h, linear_bound(in)));
    m.w1 = params.add(p + "w1", h, d, uniform_values(rng, h * d, sine_bound(h)));
    m.b1 = params.add(p + "b1", 1, d, uniform_values(rng, d, linear_bound(h)));
    mlps_.push_back(m);
  }
}

Tensor PoseEncoder::convolve(const Tensor& pose) const {
  if (pose.rows() != bones_ || pose.cols() != 6)
    throw ShapeError("pose encoder expects [" + std::to_string(bones_) + ", 6], got " +
                     to_string(pose.shape()));
  Tensor h = pose;
  for (const auto& c : convs_) {
    h = sin(matmul(h, c.w_self) + matmul(matmul(neighbor_mean_, h), c.w_nbr) + c.bias);
  }
  return h;
}

Tensor PoseEncoder::node_mlps(const Tensor& conv_features) const {
  std::vector<Tensor> rows;
  rows.reserve(bones_);
  for (std::size_t b = 0; b < bones_; ++b) {
    const auto& m = mlps_[b];
    const Tensor hb = slice_rows(conv_features, b, b + 1);
    rows.push_back(matmul(sin(matmul(hb, m.w0) + m.b0), m.w1) + m.b1);
  }
  return concat_rows(rows);
}

Tensor PoseEncoder::encode(const Tensor& pose) const { return node_mlps(convolve(pose)); }

}  // namespace posemod
