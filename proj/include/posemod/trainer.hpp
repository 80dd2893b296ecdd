#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "posemod/checkpoint.hpp"
#include "posemod/model.hpp"
#include "posemod/renderer.hpp"
#include "posemod/synthetic.hpp"

namespace posemod {

struct TrainConfig {
  double lambda_s = 0.001;
  double learning_rate = 5e-4;
  double decay_factor = 0.1;
  std::size_t decay_period = 20000;
  std::size_t rays = 1024;
  std::size_t samples = 64;
  std::size_t iterations = 20000;
  std::uint64_t seed = 0;
  AblationMode ablation = AblationMode::Full;
  double foreground_fraction = 0.8;
  bool jitter = true;
  // Ray shards per iteration; 0 reads POSEMOD_WORKERS. Serial forces one shard on this thread.
  std::size_t workers = 0;
  bool serial = false;
  // Checkpoints at iteration 0 and every interval; 0 disables them (the final one is always written).
  std::size_t checkpoint_interval = 0;
  ModelConfig model;

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
// Absent fields keep their defaults; throws SchemaError on bad values or unknown keys.
TrainConfig train_config_from_json(const std::string& text);

// Mean over rays of the per-ray L1 colour error. pred and gt are [R, 3].
Tensor reconstruction_loss(const Tensor& pred, const Tensor& gt);
Tensor total_loss(const Tensor& reconstruction, const Tensor& scale_loss, double lambda_s);

// Step decay: lr0 * factor^(floor(iteration / period)).
double learning_rate_at(const TrainConfig& config, std::size_t iteration);

class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;

  // Updates every trainable parameter that appears in `grads`.
  void step(ParameterStore& params, const GradientStore& grads, double lr);
  std::size_t steps() const { return steps_; }

  // Moments are stored as "optim/m/<name>" and "optim/v/<name>", the counter as "optim/step".
  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  std::size_t steps_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct LossRecord {
  std::size_t iteration = 0;
  double reconstruction = 0;
  double scale = 0;
  double total = 0;
  double lr = 0;
};

std::string loss_log_header();
std::string format_loss_record(const LossRecord& r);

// The rays one iteration trains on, all from a single training frame.
struct RayBatch {
  const Frame* frame = nullptr;
  std::vector<Pixel> pixels;
  std::vector<Ray> rays;
  Tensor target;  // [R, 3]
};

// Deterministic in (config.seed, iteration).
RayBatch sample_batch(const Dataset& data, const TrainConfig& config, std::size_t iteration);

RadianceField model_field(const AvatarModel& model, const PoseContext& ctx);
RenderedImage render_pose(const AvatarModel& model, const Pose& pose, const Camera& camera,
                          const BoundingSphere& bounds, const RenderSettings& settings);

class Trainer {
 public:
  Trainer(AvatarModel& model, const Dataset& data, TrainConfig config);

  // One optimisation step; throws NumericError with diagnostics on a non-finite loss or gradient.
  LossRecord step();
  // Loss of iteration `iteration`'s batch under the current parameters, without stepping.
  LossRecord evaluate(std::size_t iteration) const;

  std::size_t iteration() const { return iteration_; }
  const Adam& optimizer() const { return adam_; }
  const TrainConfig& config() const { return config_; }
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  struct ShardResult {
    double reconstruction = 0;
    GradientStore grads;
  };
  ShardResult run_shard(const RayBatch& batch, std::size_t begin, std::size_t end,
                        std::size_t shard, std::size_t iteration, bool with_grad) const;
  std::size_t shard_count() const;
  [[noreturn]] void fail(const std::string& what, const RayBatch& batch) const;

  AvatarModel& model_;
  const Dataset& data_;
  TrainConfig config_;
  Adam adam_;
  std::size_t iteration_ = 0;
};

// Builds the model from `config`, trains for config.iterations and returns the final checkpoint.
// When `out` is non-empty the checkpoint goes to `out`, the loss log to `<out>.loss.csv` and
// periodic checkpoints to `<out>.iter_NNNNNN`.
using ProgressFn = std::function<void(const LossRecord&)>;
Checkpoint train(const Dataset& data, const TrainConfig& config, const std::filesystem::path& out = {},
                 const ProgressFn& progress = {});

// A model restored from a training checkpoint.
std::unique_ptr<AvatarModel> load_model(const Checkpoint& ckpt);

struct EvalRow {
  int frame = 0;
  Split split = Split::Train;
  double psnr = 0;
  double ssim = 0;
  double f_dist = 0;
};

struct EvalOptions {
  std::size_t samples = 64;
  // Per frame: error map, frequency maps and the rendering as PNGs.
  std::filesystem::path maps_dir;
};

// Renders every frame of `split` and scores it against ground truth.
std::vector<EvalRow> evaluate_split(const AvatarModel& model, const Dataset& data, Split split,
                                    const EvalOptions& options = {});
// Ground truth scored against itself: the sentinel row layout with no model involved.
std::vector<EvalRow> evaluate_ground_truth(const Dataset& data, Split split);

std::string eval_csv(const std::vector<EvalRow>& rows);
double mean_psnr(const std::vector<EvalRow>& rows);

}  // namespace posemod
