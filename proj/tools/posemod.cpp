#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "posemod/gradcheck_suite.hpp"
#include "posemod/io.hpp"
#include "posemod/metrics.hpp"
#include "posemod/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace posemod;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kMissingFile = 3,
  kSchema = 4,
  kNumeric = 5,
  kInvalid = 6,
  kCheckFailed = 7,
};

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int report(int code, const std::string& kind, const std::string& message) {
  std::cerr << "posemod: error kind=" << kind << " exit=" << code << " msg=" << one_line(message) << "\n";
  return code;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

void print_config(const std::string& command, json cfg) {
  cfg["command"] = command;
  std::cout << "config " << cfg.dump() << "\n" << std::flush;
}

struct Args {
  bool serial = false;

  std::string scene = "default", gen_out;
  std::uint64_t gen_seed = 0;

  std::string data, train_config, train_out, ablation, cull;
  long long iterations = -1, seed = -1;

  std::string ckpt, camera, pose, render_out, mode;
  std::size_t camera_index = 0, pose_index = 0, samples = 64;

  std::string split = "novel_view", eval_out, maps;

  std::string image, ref, freq_out;

  std::string module;
  double tolerance = 1e-4;
};

std::size_t worker_count(const Args& a) { return a.serial ? 1 : 0; }

int cmd_generate(const Args& a) {
  SceneSpec scene = default_scene();
  if (a.scene != "default") {
    require_file(a.scene, "scene file");
    scene = parse_scene(read_text_file(a.scene));
  }
  scene.validate();
  print_config("generate", {{"scene", json::parse(scene_to_json(scene))}, {"out", a.gen_out}, {"seed", a.gen_seed}});
  generate_dataset(scene, a.gen_seed, a.gen_out);
  std::cout << "wrote " << a.gen_out << "\n";
  return kOk;
}

int cmd_train(const Args& a) {
  require_dir(a.data, "dataset");
  TrainConfig cfg;
  if (!a.train_config.empty()) {
    require_file(a.train_config, "train config");
    cfg = train_config_from_json(read_text_file(a.train_config));
  }
  if (a.iterations > 0) cfg.iterations = static_cast<std::size_t>(a.iterations);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (!a.ablation.empty()) cfg.ablation = parse_ablation_mode(a.ablation);
  if (!a.cull.empty()) cfg.model.cull = a.cull == "on";
  if (a.serial) cfg.serial = true;
  cfg.validate();
  json shown = json::parse(train_config_to_json(cfg));
  shown["data"] = a.data;
  shown["out"] = a.train_out;
  shown["resolved_workers"] = cfg.serial ? 1 : resolve_workers(cfg.workers);
  print_config("train", shown);
  const Dataset data = load_dataset(a.data);
  const std::size_t every = std::max<std::size_t>(1, cfg.iterations / 20);
  train(data, cfg, a.train_out, [&](const LossRecord& r) {
    if ((r.iteration + 1) % every == 0 || r.iteration + 1 == cfg.iterations)
      std::printf("iter %zu L_rec %.6f L_s %.6f total %.6f lr %.3g\n", r.iteration + 1, r.reconstruction,
                  r.scale, r.total, r.lr);
    std::fflush(stdout);
  });
  std::cout << "wrote " << a.train_out << "\n";
  return kOk;
}

int cmd_render(const Args& a) {
  require_file(a.ckpt, "checkpoint");
  require_file(a.camera, "camera file");
  require_file(a.pose, "pose file");
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  auto model = load_model(ckpt);
  if (!a.mode.empty()) model->apply_ablation(parse_ablation_mode(a.mode));
  const auto cameras = load_cameras(a.camera);
  const auto poses = load_poses(a.pose, model->topology());
  if (a.camera_index >= cameras.size()) throw InvalidArgument("camera index out of range");
  if (a.pose_index >= poses.size()) throw InvalidArgument("pose index out of range");
  const Camera& cam = cameras[a.camera_index];
  BoundingSphere bounds = default_scene().bounds;
  Vec3 background{0, 0, 0};
  const json meta = json::parse(ckpt.metadata, nullptr, false);
  if (meta.is_object() && meta.contains("render")) {
    const auto& r = meta.at("render");
    const auto& c = r.at("bounds").at("center");
    bounds = {{c[0], c[1], c[2]}, r.at("bounds").at("radius")};
    const auto& bg = r.at("background");
    background = {bg[0], bg[1], bg[2]};
  }
  RenderSettings rs;
  rs.samples = a.samples;
  rs.background = background;
  rs.workers = worker_count(a);
  print_config("render", {{"ckpt", a.ckpt},
                          {"camera", a.camera},
                          {"camera_index", a.camera_index},
                          {"pose", a.pose},
                          {"pose_index", a.pose_index},
                          {"mode", to_string(model->config().ablation)},
                          {"samples", rs.samples},
                          {"bounds", {{"center", {bounds.center[0], bounds.center[1], bounds.center[2]}}, {"radius", bounds.radius}}},
                          {"out", a.render_out}});
  const RenderedImage img = render_pose(*model, poses[a.pose_index].pose, cam, bounds, rs);
  if (fs::path(a.render_out).has_parent_path()) fs::create_directories(fs::path(a.render_out).parent_path());
  write_png(a.render_out, img.image);
  std::cout << "wrote " << a.render_out << "\n";
  return kOk;
}

int cmd_eval(const Args& a) {
  require_dir(a.data, "dataset");
  const Split split = parse_split(a.split);
  const bool gt = a.ckpt == "gt";
  if (!gt) require_file(a.ckpt, "checkpoint");
  print_config("eval", {{"ckpt", a.ckpt}, {"data", a.data}, {"split", a.split}, {"samples", a.samples},
                        {"maps", a.maps}, {"out", a.eval_out}});
  const Dataset data = load_dataset(a.data);
  std::vector<EvalRow> rows;
  if (gt) {
    rows = evaluate_ground_truth(data, split);
  } else {
    auto model = load_model(load_checkpoint(a.ckpt));
    EvalOptions opt;
    opt.samples = a.samples;
    opt.maps_dir = a.maps;
    rows = evaluate_split(*model, data, split, opt);
  }
  write_text_file(a.eval_out, eval_csv(rows));
  double ssim_sum = 0, fd_sum = 0;
  for (const auto& r : rows) ssim_sum += r.ssim, fd_sum += r.f_dist;
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  std::printf("frames %zu mean_psnr %.4f mean_ssim %.6f mean_f_dist %.6f\n", rows.size(), mean_psnr(rows),
              ssim_sum / n, fd_sum / n);
  return kOk;
}

int cmd_freq(const Args& a) {
  require_file(a.image, "image");
  require_file(a.ref, "reference image");
  print_config("freq", {{"image", a.image}, {"ref", a.ref}, {"out", a.freq_out}, {"bins", 32}, {"max_std", 0.3}});
  const Image img = read_png(a.image);
  const Image ref = read_png(a.ref);
  if (img.width != ref.width || img.height != ref.height) throw ShapeError("image sizes differ");
  const GrayImage fa = frequency_map(img), fb = frequency_map(ref);
  const FrequencyHistogram ha = frequency_histogram(fa), hb = frequency_histogram(fb);
  const double d = f_dist(ha, hb);
  const fs::path out = a.freq_out;
  fs::create_directories(out);
  write_png(out / "freq_image.png", frequency_map_image(fa));
  write_png(out / "freq_ref.png", frequency_map_image(fb));
  write_png(out / "error.png", error_map(img, ref));
  std::string csv = "bin,lo,hi,image,ref\n";
  char buf[128];
  for (std::size_t b = 0; b < ha.bins; ++b) {
    const double w = ha.max_value / static_cast<double>(ha.bins);
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.9f,%.9f\n", b, w * b, w * (b + 1), ha.mass[b], hb.mass[b]);
    csv += buf;
  }
  write_text_file(out / "histograms.csv", csv);
  std::snprintf(buf, sizeof buf, "%.9f\n", d);
  write_text_file(out / "f_dist.txt", buf);
  std::printf("f_dist %.9f\n", d);
  return kOk;
}

int cmd_gradcheck(const Args& a) {
  print_config("gradcheck", {{"module", a.module.empty() ? "all" : a.module}, {"step", 1e-5}, {"tolerance", a.tolerance}});
  const auto entries = run_gradcheck_suite(a.module);
  bool ok = true;
  for (const auto& e : entries) {
    const bool pass = e.result.finite && e.result.max_rel_error <= a.tolerance;
    ok = ok && pass;
    if (!pass)
      std::printf("failed %s/%s max_rel_error %.3e at %s[%zu]\n", e.module.c_str(), e.check.c_str(),
                  e.result.max_rel_error, e.result.worst_param.c_str(), e.result.worst_index);
  }
  for (const auto& [module, err] : worst_per_module(entries))
    std::printf("%-12s max_rel_error %.3e %s\n", module.c_str(), err, err <= a.tolerance ? "ok" : "FAIL");
  if (!ok) return report(kCheckFailed, "gradcheck", "finite-difference mismatch above tolerance");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-modulated radiance fields on synthetic articulated scenes"};
  app.require_subcommand(1);
  Args a;
  app.add_flag("--serial", a.serial, "Single worker, bit-reproducible");

  auto* gen = app.add_subcommand("generate", "Render a synthetic dataset");
  gen->add_option("--scene", a.scene, "Scene JSON or 'default'")->capture_default_str();
  gen->add_option("--out", a.gen_out, "Output directory")->required();
  gen->add_option("--seed", a.gen_seed, "Pose sampling seed")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Fit a model to a dataset");
  tr->add_option("--data", a.data, "Dataset directory")->required();
  tr->add_option("--config", a.train_config, "Train config JSON");
  tr->add_option("--out", a.train_out, "Checkpoint path")->required();
  tr->add_option("--iterations", a.iterations, "Override the iteration count");
  tr->add_option("--seed", a.seed, "Override the seed");
  tr->add_option("--ablation", a.ablation, "Override the ablation mode");
  tr->add_option("--cull", a.cull, "Skip network evaluation for points outside every part")
      ->check(CLI::IsMember({"on", "off"}));

  auto* rd = app.add_subcommand("render", "Render a pose from a camera");
  rd->add_option("--ckpt", a.ckpt, "Checkpoint")->required();
  rd->add_option("--camera", a.camera, "cameras.json")->required();
  rd->add_option("--camera-index", a.camera_index)->capture_default_str();
  rd->add_option("--pose", a.pose, "poses.json")->required();
  rd->add_option("--pose-index", a.pose_index)->capture_default_str();
  rd->add_option("--out", a.render_out, "PNG path")->required();
  rd->add_option("--mode", a.mode, "Ablation wiring to render with");
  rd->add_option("--samples", a.samples)->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Score renders against ground truth");
  ev->add_option("--ckpt", a.ckpt, "Checkpoint, or 'gt' to score ground truth against itself")->required();
  ev->add_option("--data", a.data, "Dataset directory")->required();
  ev->add_option("--split", a.split)->capture_default_str()->check(CLI::IsMember({"train", "novel_view", "novel_pose"}));
  ev->add_option("--out", a.eval_out, "CSV path")->required();
  ev->add_option("--maps", a.maps, "Directory for per-frame renders, error and frequency maps");
  ev->add_option("--samples", a.samples)->capture_default_str();

  auto* fq = app.add_subcommand("freq", "Frequency maps, histograms and F-Dist of two images");
  fq->add_option("--image", a.image)->required();
  fq->add_option("--ref", a.ref)->required();
  fq->add_option("--out", a.freq_out, "Output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--module", a.module)->check(CLI::IsMember(gradcheck_modules()));
  gc->add_option("--tolerance", a.tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(kUsage, "usage", e.what());
  }
  if (a.samples < 2) return report(kUsage, "usage", "--samples must be at least 2");

  try {
    if (*gen) return cmd_generate(a);
    if (*tr) return cmd_train(a);
    if (*rd) return cmd_render(a);
    if (*ev) return cmd_eval(a);
    if (*fq) return cmd_freq(a);
    if (*gc) return cmd_gradcheck(a);
  } catch (const IoError& e) {
    return report(kMissingFile, "io", e.what());
  } catch (const SchemaError& e) {
    return report(kSchema, "schema", e.what());
  } catch (const NumericError& e) {
    return report(kNumeric, "numeric", e.what());
  } catch (const Error& e) {
    return report(kInvalid, "invalid", e.what());
  } catch (const std::exception& e) {
    return report(kInternal, "internal", e.what());
  }
  return kUsage;
}
