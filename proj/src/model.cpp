#include "posemod/model.hpp"

#include <cmath>

#include "json.hpp"

namespace posemod {

using json = nlohmann::json;

namespace {

const char* kModelFormat = "posemod-model/1";

WindowMode window_mode_for(AblationMode mode) {
  switch (mode) {
    case AblationMode::OnlySpatialWindow: return WindowMode::OnlySpatial;
    case AblationMode::OnlyFeatureWindow: return WindowMode::OnlyFeature;
    case AblationMode::NoWindow: return WindowMode::NoWindow;
    default: return WindowMode::Full;
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json config_json(const ModelConfig& c) {
  const auto& w = c.window;
  return {
      {"ablation", to_string(c.ablation)},
      {"cull", c.cull},
      {"initial_scale", c.initial_scale},
      {"seed", c.seed},
      {"encoder",
       {{"feature_dim", c.encoder.feature_dim},
        {"conv_width", c.encoder.conv_width},
        {"mlp_width", c.encoder.mlp_width}}},
      {"window",
       {{"alpha", w.alpha},
        {"beta", w.beta},
        {"fourier_dim", w.fourier_dim},
        {"fourier_bandwidth", w.fourier_bandwidth},
        {"fourier_trainable", w.fourier_trainable},
        {"part_feature_dim", w.part_feature_dim},
        {"window_hidden", w.window_hidden},
        {"freq_hidden", w.freq_hidden},
        {"theta_per_channel", w.theta_per_channel},
        {"theta_init_noise", w.theta_init_noise}}},
      {"backbone",
       {{"layers", c.backbone.layers}, {"width", c.backbone.width}, {"omega0", c.backbone.omega0}}},
      {"radiance",
       {{"color_hidden", c.radiance.color_hidden},
        {"direction_frequencies", c.radiance.direction_frequencies},
        {"density_bias", c.radiance.density_bias}}},
  };
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  if (j.contains("ablation")) c.ablation = parse_ablation_mode(j.at("ablation").get<std::string>());
  read_if(j, "cull", c.cull);
  read_if(j, "initial_scale", c.initial_scale);
  read_if(j, "seed", c.seed);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    read_if(e, "feature_dim", c.encoder.feature_dim);
    read_if(e, "conv_width", c.encoder.conv_width);
    read_if(e, "mlp_width", c.encoder.mlp_width);
  }
  if (j.contains("window")) {
    const auto& e = j.at("window");
    auto& w = c.window;
    read_if(e, "alpha", w.alpha);
    read_if(e, "beta", w.beta);
    read_if(e, "fourier_dim", w.fourier_dim);
    read_if(e, "fourier_bandwidth", w.fourier_bandwidth);
    read_if(e, "fourier_trainable", w.fourier_trainable);
    read_if(e, "part_feature_dim", w.part_feature_dim);
    read_if(e, "window_hidden", w.window_hidden);
    read_if(e, "freq_hidden", w.freq_hidden);
    read_if(e, "theta_per_channel", w.theta_per_channel);
    read_if(e, "theta_init_noise", w.theta_init_noise);
  }
  if (j.contains("backbone")) {
    const auto& e = j.at("backbone");
    read_if(e, "layers", c.backbone.layers);
    read_if(e, "width", c.backbone.width);
    read_if(e, "omega0", c.backbone.omega0);
  }
  if (j.contains("radiance")) {
    const auto& e = j.at("radiance");
    read_if(e, "color_hidden", c.radiance.color_hidden);
    read_if(e, "direction_frequencies", c.radiance.direction_frequencies);
    read_if(e, "density_bias", c.radiance.density_bias);
  }
  c.window.mode = window_mode_for(c.ablation);
  if (c.window.alpha <= 0 || c.window.beta <= 0) throw SchemaError("window alpha and beta must be positive");
  if (c.initial_scale <= 0) throw SchemaError("initial_scale must be positive");
  return c;
}

}  // namespace

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::Full: return "full";
    case AblationMode::OnlyGnn: return "only_gnn";
    case AblationMode::OnlySyn: return "only_syn";
    case AblationMode::OnlySpatialWindow: return "only_spatial_window";
    case AblationMode::OnlyFeatureWindow: return "only_feature_window";
    case AblationMode::NoWindow: return "no_window";
  }
  return "full";
}

AblationMode parse_ablation_mode(const std::string& text) {
  for (auto m : all_ablation_modes())
    if (to_string(m) == text) return m;
  throw SchemaError("unknown ablation mode '" + text + "'");
}

const std::vector<AblationMode>& all_ablation_modes() {
  static const std::vector<AblationMode> modes{
      AblationMode::Full,         AblationMode::OnlyGnn,           AblationMode::OnlySyn,
      AblationMode::OnlySpatialWindow, AblationMode::OnlyFeatureWindow, AblationMode::NoWindow};
  return modes;
}

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
}

AvatarModel::AvatarModel(SkeletonTopology topology, ModelConfig config)
    : topology_(std::move(topology)), config_(std::move(config)) {
  topology_.validate();
  config_.window.mode = window_mode_for(config_.ablation);
  const std::size_t bones = topology_.bone_count();
  Rng rng(config_.seed);
  log_scales_ = params_.add("skeleton/log_scales", bones, 3,
                            std::vector<double>(bones * 3, std::log(config_.initial_scale)));
  encoder_ = std::make_unique<PoseEncoder>(topology_, config_.encoder, params_, rng);
  backbone_ = std::make_unique<Backbone>(3 * bones, config_.backbone, params_, rng);
  window_ = std::make_unique<WindowFunction>(bones, config_.encoder.feature_dim,
                                             backbone_->layer_widths(), config_.window, params_, rng);
  radiance_ = std::make_unique<RadianceHead>(backbone_->output_dim(), config_.radiance, params_, rng);
  if (config_.ablation == AblationMode::OnlyGnn) apply_ablation(AblationMode::OnlyGnn);
}

void AvatarModel::apply_ablation(AblationMode mode) {
  config_.ablation = mode;
  config_.window.mode = window_mode_for(mode);
  window_->set_mode(config_.window.mode);
  if (mode == AblationMode::OnlyGnn && !gnn_radiance_) {
    Rng rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
    gnn_radiance_ = std::make_unique<RadianceHead>(
        config_.encoder.feature_dim + config_.backbone.width, config_.radiance, params_, rng,
        "radiance_gnn/");
  }
}

bool AvatarModel::uses_theta() const {
  return config_.ablation != AblationMode::OnlyGnn && config_.ablation != AblationMode::OnlySyn;
}

Tensor AvatarModel::part_scales() const { return posemod::part_scales(log_scales_); }

Tensor AvatarModel::scale_loss() const { return sum(exp(row_sums(log_scales_))); }

PoseContext AvatarModel::prepare(const Tensor& pose) const {
  PoseContext ctx;
  ctx.pose = pose;
  ctx.frames = forward_kinematics(topology_, pose);
  ctx.bone_features = encoder_->encode(pose);
  ctx.window = window_->prepare(ctx.bone_features);
  ctx.scales = part_scales();
  return ctx;
}

RadianceSample AvatarModel::evaluate_valid(const PoseContext& ctx, const std::vector<Tensor>& xbar,
                                           const Tensor& valid_mask, const Tensor& dirs) const {
  const WindowOutput w = window_->forward(xbar, valid_mask, ctx.window, uses_theta());
  if (config_.ablation == AblationMode::OnlyGnn) {
    const Tensor f0 = backbone_->first_layer(w.xtilde);
    return gnn_radiance_->forward(concat_cols(std::vector<Tensor>{w.fm, f0}), dirs);
  }
  const BackboneOutput b = backbone_->modulated_forward(w.xtilde, w.theta);
  return radiance_->forward(b.features, dirs);
}

FieldOutput AvatarModel::evaluate(const PoseContext& ctx, const Tensor& points,
                                  const Tensor& dirs) const {
  if (dirs.rows() != points.rows()) throw ShapeError("one direction per point expected");
  const RelativeCoords rc = to_relative(points, ctx.frames, ctx.scales);
  FieldOutput out;
  if (!config_.cull) {
    // Strict path: every row goes through the network and invalid rows are zeroed afterwards.
    const RadianceSample s = evaluate_valid(ctx, rc.xbar, validity_mask(rc), dirs);
    std::vector<double> keep(rc.points);
    for (std::size_t p = 0; p < rc.points; ++p) keep[p] = rc.any_valid[p] ? 1.0 : 0.0;
    const Tensor k = Tensor::from(rc.points, 1, std::move(keep));
    out.sigma = s.sigma * k;
    out.color = s.color * k;
    out.evaluated = rc.points;
    return out;
  }
  std::vector<std::size_t> rows;
  for (std::size_t p = 0; p < rc.points; ++p)
    if (rc.any_valid[p]) rows.push_back(p);
  out.evaluated = rows.size();
  if (rows.empty()) {
    out.sigma = Tensor::zeros(rc.points, 1);
    out.color = Tensor::zeros(rc.points, 3);
    return out;
  }
  std::vector<Tensor> xbar;
  xbar.reserve(rc.bones);
  for (const auto& xb : rc.xbar) xbar.push_back(gather_rows(xb, rows));
  const RadianceSample s =
      evaluate_valid(ctx, xbar, validity_mask(rc, rows), gather_rows(dirs, rows));
  out.sigma = scatter_rows(s.sigma, rows, rc.points);
  out.color = scatter_rows(s.color, rows, rc.points);
  return out;
}

std::string AvatarModel::metadata() const {
  json j;
  j["format"] = kModelFormat;
  j["config"] = config_json(config_);
  j["skeleton"] = json::parse(skeleton_to_json(topology_));
  return j.dump();
}

std::unique_ptr<AvatarModel> model_from_metadata(const std::string& metadata) {
  try {
    const json j = json::parse(metadata);
    if (j.value("format", std::string()) != kModelFormat)
      throw SchemaError("checkpoint metadata is not a model description");
    return std::make_unique<AvatarModel>(parse_skeleton(j.at("skeleton").dump()),
                                         config_from(j.at("config")));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint metadata: ") + e.what());
  }
}

}  // namespace posemod
