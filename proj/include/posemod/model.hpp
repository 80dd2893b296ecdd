#pragma once

#include <memory>
#include <string>
#include <vector>

#include "posemod/backbone.hpp"
#include "posemod/pose_encoder.hpp"
#include "posemod/skeleton.hpp"
#include "posemod/window.hpp"

namespace posemod {

enum class AblationMode { Full, OnlyGnn, OnlySyn, OnlySpatialWindow, OnlyFeatureWindow, NoWindow };

std::string to_string(AblationMode mode);
AblationMode parse_ablation_mode(const std::string& text);
const std::vector<AblationMode>& all_ablation_modes();

struct ModelConfig {
  PoseEncoderConfig encoder;
  WindowConfig window;
  BackboneConfig backbone;
  RadianceConfig radiance;
  AblationMode ablation = AblationMode::Full;
  // Skip network evaluation for points outside every part box.
  bool cull = true;
  double initial_scale = kInitialPartScale;
  std::uint64_t seed = 0;
};

std::string model_config_to_json(const ModelConfig& config);
// Fields absent from the document keep their defaults.
ModelConfig model_config_from_json(const std::string& text);

// Everything that depends on the pose alone, computed once per frame.
struct PoseContext {
  Tensor pose;  // [bones, 6]
  BoneFrames frames;
  Tensor bone_features;  // G
  WindowPoseContext window;
  Tensor scales;  // [bones, 3]
};

struct FieldOutput {
  Tensor sigma;  // [P, 1]
  Tensor color;  // [P, 3]
  std::size_t evaluated = 0;  // rows that went through the network
};

class AvatarModel {
 public:
  AvatarModel(SkeletonTopology topology, ModelConfig config);

  PoseContext prepare(const Tensor& pose) const;
  PoseContext prepare(const Pose& pose) const { return prepare(pose.to_tensor()); }

  // Radiance at world points [P,3] viewed along unit directions [P,3]. Points outside every
  // part box get sigma = 0 and color = 0.
  FieldOutput evaluate(const PoseContext& ctx, const Tensor& points, const Tensor& dirs) const;

  // Network path on already-scaled coordinates of the rows that survive culling.
  RadianceSample evaluate_valid(const PoseContext& ctx, const std::vector<Tensor>& xbar,
                                const Tensor& valid_mask, const Tensor& dirs) const;

  // Rewires the field for an ablation. Switching to OnlyGnn adds its radiance head if absent.
  void apply_ablation(AblationMode mode);
  void set_cull(bool cull) { config_.cull = cull; }

  // sum_i prod_axis s_i, the part-scale regulariser.
  Tensor scale_loss() const;
  Tensor part_scales() const;

  const SkeletonTopology& topology() const { return topology_; }
  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  const PoseEncoder& encoder() const { return *encoder_; }
  const WindowFunction& window() const { return *window_; }
  WindowFunction& window() { return *window_; }
  const Backbone& backbone() const { return *backbone_; }
  const RadianceHead& radiance() const { return *radiance_; }
  const Tensor& log_scales() const { return log_scales_; }

  // JSON describing config and skeleton, stored in checkpoints.
  std::string metadata() const;

 private:
  bool uses_theta() const;

  SkeletonTopology topology_;
  ModelConfig config_;
  ParameterStore params_;
  Tensor log_scales_;
  std::unique_ptr<PoseEncoder> encoder_;
  std::unique_ptr<WindowFunction> window_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<RadianceHead> radiance_;
  std::unique_ptr<RadianceHead> gnn_radiance_;  // head used by the OnlyGnn wiring
};

// Builds a freshly initialised model from checkpoint metadata; restore() fills in the values.
std::unique_ptr<AvatarModel> model_from_metadata(const std::string& metadata);

}  // namespace posemod
