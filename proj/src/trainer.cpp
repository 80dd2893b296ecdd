#include "posemod/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "posemod/io.hpp"
#include "posemod/metrics.hpp"

namespace posemod {

using json = nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 29;
  return x;
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda_s >= 0) || !std::isfinite(lambda_s)) throw SchemaError("lambda_s must be non-negative");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate))
    throw SchemaError("learning_rate must be positive");
  if (!(decay_factor > 0) || decay_factor > 1) throw SchemaError("decay_factor must lie in (0, 1]");
  if (decay_period == 0) throw SchemaError("decay_period must be positive");
  if (rays == 0) throw SchemaError("rays must be positive");
  if (samples < 2) throw SchemaError("samples must be at least 2");
  if (iterations == 0) throw SchemaError("iterations must be positive");
  if (!(foreground_fraction >= 0 && foreground_fraction <= 1))
    throw SchemaError("foreground_fraction must lie in [0, 1]");
}

std::string train_config_to_json(const TrainConfig& c) {
  json j{{"lambda_s", c.lambda_s},
         {"learning_rate", c.learning_rate},
         {"decay_factor", c.decay_factor},
         {"decay_period", c.decay_period},
         {"rays", c.rays},
         {"samples", c.samples},
         {"iterations", c.iterations},
         {"seed", c.seed},
         {"ablation", to_string(c.ablation)},
         {"foreground_fraction", c.foreground_fraction},
         {"jitter", c.jitter},
         {"workers", c.workers},
         {"serial", c.serial},
         {"checkpoint_interval", c.checkpoint_interval},
         {"model", json::parse(model_config_to_json(c.model))}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  static const std::set<std::string> known{
      "lambda_s", "learning_rate", "decay_factor", "decay_period", "rays",   "samples",
      "iterations", "seed",        "ablation",     "foreground_fraction",   "jitter", "workers",
      "serial",   "checkpoint_interval", "model"};
  TrainConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw SchemaError("train config must be a JSON object");
    for (const auto& [key, value] : j.items())
      if (!known.count(key)) throw SchemaError("unknown train config key '" + key + "'");
    read_if(j, "lambda_s", c.lambda_s);
    read_if(j, "learning_rate", c.learning_rate);
    read_if(j, "decay_factor", c.decay_factor);
    read_if(j, "decay_period", c.decay_period);
    read_if(j, "rays", c.rays);
    read_if(j, "samples", c.samples);
    read_if(j, "iterations", c.iterations);
    read_if(j, "seed", c.seed);
    if (j.contains("ablation")) c.ablation = parse_ablation_mode(j.at("ablation").get<std::string>());
    read_if(j, "foreground_fraction", c.foreground_fraction);
    read_if(j, "jitter", c.jitter);
    read_if(j, "workers", c.workers);
    read_if(j, "serial", c.serial);
    read_if(j, "checkpoint_interval", c.checkpoint_interval);
    if (j.contains("model")) c.model = model_config_from_json(j.at("model").dump());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

Tensor reconstruction_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape() || pred.cols() != 3)
    throw ShapeError("reconstruction loss needs matching [R, 3] colours, got " +
                     to_string(pred.shape()) + " and " + to_string(gt.shape()));
  return scale(sum(abs(pred - gt)), 1.0 / static_cast<double>(pred.rows()));
}

Tensor total_loss(const Tensor& reconstruction, const Tensor& scale_loss, double lambda_s) {
  return reconstruction + scale(scale_loss, lambda_s);
}

double learning_rate_at(const TrainConfig& config, std::size_t iteration) {
  const auto periods = static_cast<double>(iteration / config.decay_period);
  return config.learning_rate * std::pow(config.decay_factor, periods);
}

// ---- Adam ---------------------------------------------------------------------------

void Adam::step(ParameterStore& params, const GradientStore& grads, double lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (const Tensor& p : params.all()) {
    if (!p.requires_grad() || !grads.contains(p.name())) continue;
    const auto& g = grads.at(p.name());
    auto& m = m_[p.name()];
    auto& v = v_[p.name()];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    Tensor leaf = p;
    auto x = leaf.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
    }
  }
}

void Adam::save(Checkpoint& ckpt) const {
  ckpt.add("optim/step", {1, 1}, {static_cast<double>(steps_)});
  for (const auto& [name, m] : m_) ckpt.add("optim/m/" + name, {1, m.size()}, m);
  for (const auto& [name, v] : v_) ckpt.add("optim/v/" + name, {1, v.size()}, v);
}

void Adam::load(const Checkpoint& ckpt) {
  m_.clear();
  v_.clear();
  steps_ = 0;
  for (const auto& a : ckpt.arrays) {
    if (a.name == "optim/step") {
      if (a.values.size() != 1) throw SchemaError("optim/step must be a scalar");
      steps_ = static_cast<std::size_t>(a.values[0]);
    } else if (a.name.rfind("optim/m/", 0) == 0) {
      m_[a.name.substr(8)] = a.values;
    } else if (a.name.rfind("optim/v/", 0) == 0) {
      v_[a.name.substr(8)] = a.values;
    }
  }
  for (const auto& [name, m] : m_)
    if (!v_.count(name) || v_.at(name).size() != m.size())
      throw SchemaError("optimizer moments for '" + name + "' are incomplete");
}

// ---- logging ------------------------------------------------------------------------

std::string loss_log_header() { return "iteration,L_rec,L_s,total,lr"; }

std::string format_loss_record(const LossRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", r.iteration, r.reconstruction,
                r.scale, r.total, r.lr);
  return buf;
}

// ---- batches ------------------------------------------------------------------------

RayBatch sample_batch(const Dataset& data, const TrainConfig& config, std::size_t iteration) {
  const auto train = data.split(Split::Train);
  if (train.empty()) throw InvalidArgument("dataset has no training frames");
  Rng rng(mix(config.seed, iteration));
  RayBatch batch;
  batch.frame = train[rng.index(train.size())];
  const Frame& f = *batch.frame;
  std::vector<Pixel> fg, bg;
  for (std::size_t y = 0; y < f.mask.height; ++y)
    for (std::size_t x = 0; x < f.mask.width; ++x)
      (f.mask.at(x, y) > 0.5 ? fg : bg).push_back({x, y});
  std::size_t n_fg = static_cast<std::size_t>(std::llround(config.foreground_fraction * config.rays));
  if (fg.empty()) n_fg = 0;
  if (bg.empty()) n_fg = config.rays;
  for (std::size_t i = 0; i < config.rays; ++i) {
    const auto& pool = i < n_fg ? fg : bg;
    batch.pixels.push_back(pool[rng.index(pool.size())]);
  }
  const Camera& cam = data.camera_of(f);
  const auto [near, far] = near_far(cam, data.bounds);
  batch.rays = generate_rays(cam, batch.pixels);
  std::vector<double> target;
  target.reserve(3 * config.rays);
  for (std::size_t i = 0; i < batch.rays.size(); ++i) {
    batch.rays[i].near = near;
    batch.rays[i].far = far;
    for (std::size_t c = 0; c < 3; ++c) target.push_back(f.image.at(batch.pixels[i].x, batch.pixels[i].y, c));
  }
  batch.target = Tensor::from(config.rays, 3, std::move(target));
  return batch;
}

RadianceField model_field(const AvatarModel& model, const PoseContext& ctx) {
  return [&model, &ctx](const Tensor& points, const Tensor& dirs) {
    FieldOutput o = model.evaluate(ctx, points, dirs);
    return FieldSamples{o.sigma, o.color};
  };
}

RenderedImage render_pose(const AvatarModel& model, const Pose& pose, const Camera& camera,
                          const BoundingSphere& bounds, const RenderSettings& settings) {
  NoGradGuard guard;
  const PoseContext ctx = model.prepare(pose);
  return render_image(model_field(model, ctx), camera, bounds, settings);
}

// ---- trainer ------------------------------------------------------------------------

Trainer::Trainer(AvatarModel& model, const Dataset& data, TrainConfig config)
    : model_(model), data_(data), config_(std::move(config)) {
  config_.validate();
  if (model_.config().ablation != config_.ablation) model_.apply_ablation(config_.ablation);
}

std::size_t Trainer::shard_count() const {
  if (config_.serial) return 1;
  return std::max<std::size_t>(1, std::min(resolve_workers(config_.workers), config_.rays));
}

Trainer::ShardResult Trainer::run_shard(const RayBatch& batch, std::size_t begin, std::size_t end,
                                        std::size_t shard, std::size_t iteration,
                                        bool with_grad) const {
  ShardResult out;
  std::optional<NoGradGuard> guard;
  if (!with_grad) guard.emplace();
  const PoseContext ctx = model_.prepare(data_.pose_of(*batch.frame));
  const std::vector<Ray> rays(batch.rays.begin() + begin, batch.rays.begin() + end);
  RenderSettings rs;
  rs.samples = config_.samples;
  rs.background = data_.background;
  rs.jitter = config_.jitter;
  Rng rng(mix(mix(config_.seed, iteration), 0x5eed0000ULL + shard));
  const TensorComposite c = render_rays(model_field(model_, ctx), rays, rs, &rng);
  const Tensor target = slice_rows(batch.target, begin, end);
  // Shards share the batch-wide normalisation so their gradients add up to the full loss's.
  const Tensor rec = scale(sum(abs(c.color - target)), 1.0 / static_cast<double>(batch.rays.size()));
  out.reconstruction = rec.item();
  if (with_grad) out.grads = backward(rec);
  return out;
}

void Trainer::fail(const std::string& what, const RayBatch& batch) const {
  std::ostringstream os;
  os << "iteration " << iteration_ << ": " << what << "; frame " << batch.frame->record.id
     << "; rays";
  const std::size_t shown = std::min<std::size_t>(batch.pixels.size(), 8);
  for (std::size_t i = 0; i < shown; ++i)
    os << " " << batch.pixels[i].y * batch.frame->image.width + batch.pixels[i].x;
  if (shown < batch.pixels.size()) os << " ...";
  os << "; parameter norms";
  for (const Tensor& p : model_.parameters().all()) {
    double s = 0;
    for (double v : p.data()) s += v * v;
    os << " " << p.name() << "=" << std::sqrt(s);
  }
  throw NumericError(os.str());
}

LossRecord Trainer::step() {
  const RayBatch batch = sample_batch(data_, config_, iteration_);
  const std::size_t shards = shard_count();
  std::vector<ShardResult> results(shards);
  std::vector<std::string> errors(shards);
  auto run = [&](std::size_t s) {
    const std::size_t begin = batch.rays.size() * s / shards;
    const std::size_t end = batch.rays.size() * (s + 1) / shards;
    try {
      results[s] = run_shard(batch, begin, end, s, iteration_, true);
    } catch (const NumericError& e) {
      errors[s] = e.what();
    }
  };
  if (shards == 1) {
    run(0);
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t s = 0; s < shards; ++s) threads.emplace_back(run, s);
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(e, batch);

  const Tensor ls = model_.scale_loss();
  GradientStore grads = backward(scale(ls, config_.lambda_s));
  LossRecord rec;
  rec.iteration = iteration_;
  // Merged in shard order so a given shard count always produces the same sums.
  for (auto& r : results) {
    rec.reconstruction += r.reconstruction;
    for (const auto& [name, g] : r.grads.entries()) grads.accumulate(name, g);
  }
  rec.scale = ls.item();
  rec.total = rec.reconstruction + config_.lambda_s * rec.scale;
  rec.lr = learning_rate_at(config_, iteration_);
  if (!std::isfinite(rec.total)) fail("non-finite loss", batch);
  for (const auto& [name, g] : grads.entries())
    for (double v : g)
      if (!std::isfinite(v)) fail("non-finite gradient for " + name, batch);

  adam_.step(model_.parameters(), grads, rec.lr);
  ++iteration_;
  return rec;
}

LossRecord Trainer::evaluate(std::size_t iteration) const {
  const RayBatch batch = sample_batch(data_, config_, iteration);
  const std::size_t shards = shard_count();
  LossRecord rec;
  rec.iteration = iteration;
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t begin = batch.rays.size() * s / shards;
    const std::size_t end = batch.rays.size() * (s + 1) / shards;
    rec.reconstruction += run_shard(batch, begin, end, s, iteration, false).reconstruction;
  }
  NoGradGuard guard;
  rec.scale = model_.scale_loss().item();
  rec.total = rec.reconstruction + config_.lambda_s * rec.scale;
  rec.lr = learning_rate_at(config_, iteration);
  return rec;
}

Checkpoint Trainer::checkpoint() const {
  json meta = json::parse(model_.metadata());
  meta["train"] = json::parse(train_config_to_json(config_));
  meta["iteration"] = iteration_;
  const auto& b = data_.bounds;
  meta["render"] = {{"bounds", {{"center", {b.center[0], b.center[1], b.center[2]}}, {"radius", b.radius}}},
                    {"background", {data_.background[0], data_.background[1], data_.background[2]}}};
  Checkpoint ckpt = snapshot(model_.parameters(), meta.dump());
  adam_.save(ckpt);
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  posemod::restore(model_.parameters(), ckpt);
  adam_.load(ckpt);
  try {
    iteration_ = json::parse(ckpt.metadata).value("iteration", std::size_t{0});
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint metadata: ") + e.what());
  }
}

std::unique_ptr<AvatarModel> load_model(const Checkpoint& ckpt) {
  auto model = model_from_metadata(ckpt.metadata);
  // The OnlyGnn head is created lazily; checkpoints of other modes may carry it too.
  if (ckpt.find("radiance_gnn/sigma/w") && !model->parameters().contains("radiance_gnn/sigma/w")) {
    const AblationMode mode = model->config().ablation;
    model->apply_ablation(AblationMode::OnlyGnn);
    model->apply_ablation(mode);
  }
  restore(model->parameters(), ckpt);
  return model;
}

Checkpoint train(const Dataset& data, const TrainConfig& config, const std::filesystem::path& out,
                 const ProgressFn& progress) {
  config.validate();
  ModelConfig mc = config.model;
  mc.seed = config.seed;
  mc.ablation = config.ablation;
  AvatarModel model(data.skeleton, mc);
  Trainer trainer(model, data, config);

  std::ofstream log;
  auto iter_path = [&](std::size_t it) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ".iter_%06zu", it);
    return std::filesystem::path(out.string() + buf);
  };
  if (!out.empty()) {
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    log.open(out.string() + ".loss.csv", std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write " + out.string() + ".loss.csv");
    log << loss_log_header() << "\n";
  }
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (!out.empty() && config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0)
      save_checkpoint(iter_path(it), trainer.checkpoint());
    const LossRecord r = trainer.step();
    if (log.is_open()) log << format_loss_record(r) << "\n";
    if (progress) progress(r);
  }
  Checkpoint final = trainer.checkpoint();
  if (!out.empty()) {
    log.flush();
    save_checkpoint(out, final);
  }
  return final;
}

// ---- evaluation ---------------------------------------------------------------------

std::vector<EvalRow> evaluate_split(const AvatarModel& model, const Dataset& data, Split split,
                                    const EvalOptions& options) {
  RenderSettings rs;
  rs.samples = options.samples;
  rs.background = data.background;
  std::vector<EvalRow> rows;
  for (const Frame* f : data.split(split)) {
    const RenderedImage r = render_pose(model, data.pose_of(*f), data.camera_of(*f), data.bounds, rs);
    EvalRow row{f->record.id, split, psnr(r.image, f->image), ssim(r.image, f->image),
                frequency_distance(r.image, f->image)};
    rows.push_back(row);
    if (!options.maps_dir.empty()) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%04d", f->record.id);
      const auto dir = options.maps_dir;
      std::filesystem::create_directories(dir);
      write_png(dir / (std::string(stem) + "_render.png"), r.image);
      write_png(dir / (std::string(stem) + "_error.png"), error_map(r.image, f->image));
      write_png(dir / (std::string(stem) + "_freq.png"), frequency_map_image(frequency_map(r.image)));
      write_png(dir / (std::string(stem) + "_freq_ref.png"), frequency_map_image(frequency_map(f->image)));
    }
  }
  return rows;
}

std::vector<EvalRow> evaluate_ground_truth(const Dataset& data, Split split) {
  std::vector<EvalRow> rows;
  for (const Frame* f : data.split(split))
    rows.push_back({f->record.id, split, psnr(f->image, f->image), ssim(f->image, f->image),
                    frequency_distance(f->image, f->image)});
  return rows;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::string s = "frame,split,psnr,ssim,f_dist\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.4f,%.6f,%.6f\n", r.frame, to_string(r.split).c_str(),
                  r.psnr, r.ssim, r.f_dist);
    s += buf;
  }
  return s;
}

double mean_psnr(const std::vector<EvalRow>& rows) {
  if (rows.empty()) return 0;
  double s = 0;
  for (const auto& r : rows) s += r.psnr;
  return s / static_cast<double>(rows.size());
}

}  // namespace posemod
