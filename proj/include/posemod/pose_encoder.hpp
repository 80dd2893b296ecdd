#pragma once

#include <string>
#include <vector>

#include "posemod/rng.hpp"
#include "posemod/skeleton.hpp"
#include "posemod/tensor.hpp"

namespace posemod {

struct PoseEncoderConfig {
  std::size_t feature_dim = 32;  // D_g
  std::size_t conv_width = 32;
  std::size_t mlp_width = 32;
};

// Undirected bone adjacency with self-loops (symmetric, 0/1 entries).
std::vector<double> bone_adjacency(const SkeletonTopology& topo);
// Rows of the self-looped adjacency divided by their degree.
std::vector<double> normalized_adjacency(const SkeletonTopology& topo);
// Mean over graph neighbours, excluding self: the aggregation used by each conv layer.
std::vector<double> neighbor_mean_matrix(const SkeletonTopology& topo);

// Two graph convolutions h' = sin(h W_self + mean_nbr(h) W_nbr + b) over the per-bone 6-D
// rotations, followed by an independent two-layer MLP for every bone.
class PoseEncoder {
 public:
  PoseEncoder(const SkeletonTopology& topo, PoseEncoderConfig config, ParameterStore& params,
              Rng& rng, const std::string& prefix = "pose_encoder/");

  // pose [bones, 6] -> G [bones, feature_dim]
  Tensor encode(const Tensor& pose) const;

  // Graph convolutions only, [bones, conv_width].
  Tensor convolve(const Tensor& pose) const;
  // Per-bone MLP heads applied to conv features.
  Tensor node_mlps(const Tensor& conv_features) const;

  const PoseEncoderConfig& config() const { return config_; }
  std::size_t bones() const { return bones_; }

 private:
  struct Conv {
    Tensor w_self, w_nbr, bias;
  };
  struct NodeMlp {
    Tensor w0, b0, w1, b1;
  };

  PoseEncoderConfig config_;
  std::size_t bones_;
  Tensor neighbor_mean_;
  std::vector<Conv> convs_;
  std::vector<NodeMlp> mlps_;
};

}  // namespace posemod
