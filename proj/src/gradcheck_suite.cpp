#include "posemod/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>

#include "posemod/backbone.hpp"
#include "posemod/model.hpp"
#include "posemod/pose_encoder.hpp"
#include "posemod/renderer.hpp"
#include "posemod/synthetic.hpp"
#include "posemod/trainer.hpp"
#include "posemod/window.hpp"

namespace posemod {

namespace {

constexpr double kStep = 1e-5;

Tensor random_leaf(Rng& rng, const std::string& name, std::size_t r, std::size_t c, double lo,
                   double hi) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::parameter(name, r, c, std::move(v));
}

// Values bounded away from zero, with either sign.
Tensor signed_leaf(Rng& rng, const std::string& name, std::size_t r, std::size_t c) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.5);
  return Tensor::parameter(name, r, c, std::move(v));
}

// Distinct values at least 0.05 apart, shuffled, so max-style ops have no near-ties.
Tensor spread_leaf(Rng& rng, const std::string& name, std::size_t r, std::size_t c) {
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0 + 0.05 * static_cast<double>(i);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
  return Tensor::parameter(name, r, c, std::move(v));
}

// Contracts an arbitrary output against fixed random weights so every output entry matters.
Tensor contract(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(out.size());
  for (auto& x : w) x = rng.uniform(-1, 1);
  return sum(out * Tensor::from(out.rows(), out.cols(), std::move(w)));
}

struct Suite {
  std::vector<SuiteEntry>& out;
  std::string module;
  std::uint64_t seed;

  void check(const std::string& name, const std::function<Tensor()>& fn, std::vector<Tensor> params,
             std::size_t max_coords = 0) {
    out.push_back({module, name, finite_difference_check(fn, std::move(params), kStep, max_coords)});
  }
};

void tensor_ops(Suite& s) {
  Rng rng(s.seed);
  auto unary = [&](const std::string& name, const Tensor& x, const std::function<Tensor(const Tensor&)>& f) {
    s.check(name, [=] { return contract(f(x), 11); }, {x});
  };
  auto binary = [&](const std::string& name, const Tensor& a, const Tensor& b,
                    const std::function<Tensor(const Tensor&, const Tensor&)>& f) {
    s.check(name, [=] { return contract(f(a, b), 12); }, {a, b});
  };

  binary("matmul", random_leaf(rng, "a", 5, 4, -1, 1), random_leaf(rng, "b", 4, 3, -1, 1),
         [](const Tensor& a, const Tensor& b) { return matmul(a, b); });
  binary("matmul_wide", random_leaf(rng, "a", 9, 19, -1, 1), random_leaf(rng, "b", 19, 21, -1, 1),
         [](const Tensor& a, const Tensor& b) { return matmul(a, b); });
  binary("add", random_leaf(rng, "a", 4, 3, -1, 1), random_leaf(rng, "b", 4, 3, -1, 1),
         [](const Tensor& a, const Tensor& b) { return a + b; });
  binary("add_broadcast_row", random_leaf(rng, "a", 4, 3, -1, 1), random_leaf(rng, "b", 1, 3, -1, 1),
         [](const Tensor& a, const Tensor& b) { return a + b; });
  binary("sub_broadcast_col", random_leaf(rng, "a", 4, 3, -1, 1), random_leaf(rng, "b", 4, 1, -1, 1),
         [](const Tensor& a, const Tensor& b) { return a - b; });
  binary("mul", random_leaf(rng, "a", 4, 3, -1, 1), random_leaf(rng, "b", 4, 3, -1, 1),
         [](const Tensor& a, const Tensor& b) { return a * b; });
  binary("mul_broadcast_scalar", random_leaf(rng, "a", 4, 3, -1, 1), random_leaf(rng, "b", 1, 1, -1, 1),
         [](const Tensor& a, const Tensor& b) { return a * b; });
  binary("div", random_leaf(rng, "a", 4, 3, -1, 1), random_leaf(rng, "b", 4, 3, 0.5, 2),
         [](const Tensor& a, const Tensor& b) { return a / b; });
  unary("scale", random_leaf(rng, "x", 3, 4, -1, 1), [](const Tensor& x) { return scale(x, -2.5); });
  unary("add_scalar", random_leaf(rng, "x", 3, 4, -1, 1), [](const Tensor& x) { return add_scalar(x, 0.7); });
  unary("sin", random_leaf(rng, "x", 3, 4, -3, 3), [](const Tensor& x) { return sin(x); });
  unary("exp", random_leaf(rng, "x", 3, 4, -2, 2), [](const Tensor& x) { return exp(x); });
  unary("sigmoid", random_leaf(rng, "x", 3, 4, -4, 4), [](const Tensor& x) { return sigmoid(x); });
  unary("relu", signed_leaf(rng, "x", 3, 4), [](const Tensor& x) { return relu(x); });
  unary("softplus", random_leaf(rng, "x", 3, 4, -5, 5), [](const Tensor& x) { return softplus(x); });
  unary("softplus_large", random_leaf(rng, "x", 2, 3, 21, 30), [](const Tensor& x) { return softplus(x); });
  unary("abs", signed_leaf(rng, "x", 3, 4), [](const Tensor& x) { return abs(x); });
  unary("pow", random_leaf(rng, "x", 3, 4, 0.2, 2), [](const Tensor& x) { return pow(x, 3.0); });
  unary("pow_fractional", random_leaf(rng, "x", 3, 4, 0.2, 2), [](const Tensor& x) { return pow(x, 0.5); });
  unary("l2_norm", random_leaf(rng, "x", 4, 3, -1, 1), [](const Tensor& x) { return l2_norm(x); });
  binary("concat_cols", random_leaf(rng, "a", 3, 2, -1, 1), random_leaf(rng, "b", 3, 4, -1, 1),
         [](const Tensor& a, const Tensor& b) { return concat_cols(std::vector<Tensor>{a, b}); });
  binary("concat_rows", random_leaf(rng, "a", 2, 3, -1, 1), random_leaf(rng, "b", 4, 3, -1, 1),
         [](const Tensor& a, const Tensor& b) { return concat_rows(std::vector<Tensor>{a, b}); });
  unary("slice_cols", random_leaf(rng, "x", 3, 5, -1, 1), [](const Tensor& x) { return slice_cols(x, 1, 4); });
  unary("slice_rows", random_leaf(rng, "x", 5, 3, -1, 1), [](const Tensor& x) { return slice_rows(x, 2, 5); });
  unary("sum", random_leaf(rng, "x", 3, 4, -1, 1), [](const Tensor& x) { return sum(sin(x)); });
  unary("row_sums", random_leaf(rng, "x", 3, 4, -1, 1), [](const Tensor& x) { return row_sums(x); });
  unary("col_sums", random_leaf(rng, "x", 3, 4, -1, 1), [](const Tensor& x) { return col_sums(x); });
  unary("max_reduce_cols", spread_leaf(rng, "x", 4, 5), [](const Tensor& x) { return max_reduce(x, Axis::Cols); });
  unary("max_reduce_rows", spread_leaf(rng, "x", 4, 5), [](const Tensor& x) { return max_reduce(x, Axis::Rows); });
  {
    const Tensor all = spread_leaf(rng, "x", 3, 12);
    s.check("elementwise_max",
            [=] {
              const std::vector<Tensor> parts{slice_cols(all, 0, 4), slice_cols(all, 4, 8), slice_cols(all, 8, 12)};
              return contract(elementwise_max(parts), 13);
            },
            {all});
  }
  unary("transpose", random_leaf(rng, "x", 3, 4, -1, 1), [](const Tensor& x) { return transpose(x); });
  unary("reshape", random_leaf(rng, "x", 3, 4, -1, 1), [](const Tensor& x) { return reshape(x, 2, 6); });
  unary("exclusive_cumsum", random_leaf(rng, "x", 3, 5, -1, 1), [](const Tensor& x) { return exclusive_cumsum(x); });
  const std::vector<std::size_t> rows{4, 0, 2, 4};
  unary("gather_rows", random_leaf(rng, "x", 5, 3, -1, 1), [=](const Tensor& x) { return gather_rows(x, rows); });
  const std::vector<std::size_t> targets{1, 3, 4};
  unary("scatter_rows", random_leaf(rng, "x", 3, 2, -1, 1),
        [=](const Tensor& x) { return scatter_rows(x, targets, 6); });
  {
    const Tensor a = random_leaf(rng, "a", 4, 3, -1, 1);
    const Tensor b = random_leaf(rng, "b", 3, 3, -1, 1);
    const Tensor c = random_leaf(rng, "c", 1, 3, 0.5, 1.5);
    s.check("composite_graph", [=] { return sum(pow(sigmoid(matmul(sin(a), b) / c) + exp(a), 2.0)); },
            {a, b, c});
  }
}

void skeleton_checks(Suite& s) {
  Rng rng(s.seed + 1);
  const SkeletonTopology topo = default_scene().skeleton;
  const std::size_t B = topo.bone_count();
  const Tensor omega = random_leaf(rng, "omega", 1, 6, -1, 1);
  s.check("rot6d_to_matrix", [=] { return contract(rot6d_to_matrix(omega), 21); }, {omega});

  const Tensor pose = random_leaf(rng, "pose", B, 6, -1, 1);
  s.check("forward_kinematics",
          [=] {
            const BoneFrames f = forward_kinematics(topo, pose);
            std::vector<Tensor> parts;
            for (std::size_t b = 0; b < B; ++b) {
              parts.push_back(reshape(f.rotation[b], 1, 9));
              parts.push_back(f.origin[b]);
            }
            return contract(concat_cols(parts), 22);
          },
          {pose});

  const Tensor log_scales = random_leaf(rng, "log_scales", B, 3, -1.5, -0.3);
  const Tensor points = random_leaf(rng, "points", 6, 3, -2, 2);
  s.check("relative_coordinates",
          [=] {
            const RelativeCoords rc = to_relative(points, forward_kinematics(topo, pose), part_scales(log_scales));
            std::vector<Tensor> parts(rc.xbar.begin(), rc.xbar.end());
            return contract(concat_cols(parts), 23);
          },
          {pose, log_scales, points});
}

void encoder_checks(Suite& s) {
  Rng rng(s.seed + 2);
  const SkeletonTopology topo = default_scene().skeleton;
  ParameterStore params;
  PoseEncoder enc(topo, {}, params, rng);
  const Tensor pose = random_leaf(rng, "pose", topo.bone_count(), 6, -1, 1);
  std::vector<Tensor> ps = params.trainable();
  ps.push_back(pose);
  s.check("encode", [=, &enc] { return contract(enc.encode(pose), 31); }, ps);
}

void window_checks(Suite& s) {
  Rng rng(s.seed + 3);
  const std::size_t B = 5, P = 7, G = 8;
  ParameterStore params;
  WindowConfig cfg;
  cfg.part_feature_dim = 6;
  cfg.window_hidden = 5;
  cfg.freq_hidden = 6;
  cfg.fourier_dim = 4;
  cfg.fourier_bandwidth = 2.0;
  cfg.fourier_trainable = true;
  const std::vector<std::size_t> widths{4, 4};
  WindowFunction win(B, G, widths, cfg, params, rng);
  const Tensor feats = random_leaf(rng, "bone_features", B, G, -1, 1);
  std::vector<Tensor> xbar;
  std::vector<double> mask(P * B);
  for (std::size_t b = 0; b < B; ++b) xbar.push_back(random_leaf(rng, "xbar" + std::to_string(b), P, 3, -0.9, 0.9));
  for (auto& m : mask) m = rng.uniform() < 0.8 ? 1.0 : 0.0;
  const Tensor vm = Tensor::from(P, B, mask);

  s.check("spatial_window", [=] { return contract(spatial_window(xbar, vm, 2.0, 6.0), 41); }, xbar);
  for (WindowMode mode : {WindowMode::Full, WindowMode::OnlySpatial, WindowMode::OnlyFeature, WindowMode::NoWindow}) {
    std::vector<Tensor> ps = params.trainable();
    ps.push_back(feats);
    ps.insert(ps.end(), xbar.begin(), xbar.end());
    s.check("forward_" + to_string(mode),
            [=, &win] {
              win.set_mode(mode);
              const WindowOutput o = win.forward(xbar, vm, win.prepare(feats), true);
              std::vector<Tensor> parts{o.w, o.fm, o.xtilde};
              parts.insert(parts.end(), o.theta.begin(), o.theta.end());
              return contract(concat_cols(parts), 42);
            },
            ps);
  }
  win.set_mode(WindowMode::Full);
}

void backbone_checks(Suite& s) {
  Rng rng(s.seed + 4);
  const std::size_t P = 5, in = 6;
  ParameterStore params;
  BackboneConfig cfg;
  cfg.layers = 3;
  cfg.width = 6;
  cfg.omega0 = 3.0;
  Backbone bb(in, cfg, params, rng);
  const Tensor x = random_leaf(rng, "xtilde", P, in, -1, 1);
  std::vector<Tensor> theta_per_channel, theta_scalar;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    theta_per_channel.push_back(random_leaf(rng, "theta" + std::to_string(l), P, cfg.width, 0.5, 1.5));
    theta_scalar.push_back(random_leaf(rng, "theta_s" + std::to_string(l), P, 1, 0.5, 1.5));
  }
  auto with = [&](std::vector<Tensor> extra) {
    std::vector<Tensor> ps = params.trainable();
    ps.push_back(x);
    ps.insert(ps.end(), extra.begin(), extra.end());
    return ps;
  };
  s.check("modulated_per_channel", [=, &bb] { return contract(bb.modulated_forward(x, theta_per_channel).features, 51); },
          with(theta_per_channel));
  s.check("modulated_per_layer", [=, &bb] { return contract(bb.modulated_forward(x, theta_scalar).features, 52); },
          with(theta_scalar));
  s.check("unmodulated", [=, &bb] { return contract(bb.modulated_forward(x, {}).features, 53); }, with({}));

  ParameterStore head_params;
  RadianceConfig rc;
  rc.color_hidden = 6;
  RadianceHead head(bb.output_dim(), rc, head_params, rng);
  const Tensor feats = random_leaf(rng, "features", P, bb.output_dim(), -1, 1);
  std::vector<double> d;
  for (std::size_t p = 0; p < P; ++p) {
    const Vec3 v = normalized(Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 1)});
    d.insert(d.end(), {v[0], v[1], v[2]});
  }
  const Tensor dirs = Tensor::from(P, 3, d);
  std::vector<Tensor> hp = head_params.trainable();
  hp.push_back(feats);
  s.check("radiance_head",
          [=, &head] {
            const RadianceSample r = head.forward(feats, dirs);
            return contract(concat_cols(std::vector<Tensor>{r.sigma, r.color}), 54);
          },
          hp);
}

void renderer_checks(Suite& s) {
  Rng rng(s.seed + 5);
  const std::size_t R = 3, S = 6;
  const Tensor sigma = random_leaf(rng, "sigma", R * S, 1, 0.0, 3.0);
  const Tensor color = random_leaf(rng, "color", R * S, 3, 0.0, 1.0);
  const Tensor delta = random_leaf(rng, "delta", R, S, 0.05, 0.5);
  s.check("composite",
          [=] {
            const TensorComposite c = composite(sigma, color, delta, R, {0.2, 0.3, 0.4});
            return contract(concat_cols(std::vector<Tensor>{c.color, c.alpha, c.weights}), 61);
          },
          {sigma, color, delta});
}

// Full training loss of a 2x2 pixel block on the subject, every model parameter probed.
void pipeline_checks(Suite& s) {
  const SceneSpec scene = default_scene();
  const Camera cam = ring_camera(scene, 30.0);
  ChainAngles angles;
  angles.elbow = 40;
  angles.knee = 25;
  const Pose pose = chain_pose(angles);
  const OracleRender gt = render_oracle(scene, pose, cam, 32);
  std::size_t cx = 0, cy = 0, count = 0;
  for (std::size_t y = 0; y < gt.alpha.height; ++y)
    for (std::size_t x = 0; x < gt.alpha.width; ++x)
      if (gt.alpha.at(x, y) > 0.5) cx += x, cy += y, ++count;
  cx = count ? cx / count : cam.width / 2;
  cy = count ? cy / count : cam.height / 2;
  const std::vector<Pixel> pixels{{cx, cy}, {cx + 1, cy}, {cx, cy + 1}, {cx + 1, cy + 1}};
  std::vector<Ray> rays = generate_rays(cam, pixels);
  const auto [near, far] = near_far(cam, scene.bounds);
  std::vector<double> target;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    rays[i].near = near;
    rays[i].far = far;
    for (std::size_t c = 0; c < 3; ++c) target.push_back(gt.image.at(pixels[i].x, pixels[i].y, c));
  }
  const Tensor gt_rays = Tensor::from(rays.size(), 3, target);

  for (AblationMode mode : {AblationMode::Full, AblationMode::OnlyGnn}) {
    ModelConfig mc;
    mc.seed = s.seed;
    mc.ablation = mode;
    auto model = std::make_shared<AvatarModel>(scene.skeleton, mc);
    RenderSettings rs;
    rs.samples = 32;
    const Tensor pose_t = pose.to_tensor();
    auto loss = [=] {
      const PoseContext ctx = model->prepare(pose_t);
      const TensorComposite c = render_rays(model_field(*model, ctx), rays, rs, nullptr);
      return total_loss(reconstruction_loss(c.color, gt_rays), model->scale_loss(), 0.001);
    };
    s.check("render_loss_" + to_string(mode), loss, model->parameters().trainable(), 24);
  }
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> m{"tensor", "skeleton", "pose_encoder", "window",
                                          "backbone", "renderer", "pipeline"};
  return m;
}

std::vector<SuiteEntry> run_gradcheck_suite(const std::string& module, std::uint64_t seed) {
  const auto& known = gradcheck_modules();
  if (!module.empty() && std::find(known.begin(), known.end(), module) == known.end())
    throw InvalidArgument("unknown gradcheck module '" + module + "'");
  std::vector<SuiteEntry> out;
  auto run = [&](const std::string& name, void (*fn)(Suite&)) {
    if (!module.empty() && module != name) return;
    Suite s{out, name, seed};
    fn(s);
  };
  run("tensor", tensor_ops);
  run("skeleton", skeleton_checks);
  run("pose_encoder", encoder_checks);
  run("window", window_checks);
  run("backbone", backbone_checks);
  run("renderer", renderer_checks);
  run("pipeline", pipeline_checks);
  return out;
}

std::vector<std::pair<std::string, double>> worst_per_module(const std::vector<SuiteEntry>& entries) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : entries) {
    if (out.empty() || out.back().first != e.module) out.emplace_back(e.module, 0.0);
    out.back().second = std::max(out.back().second, e.result.max_rel_error);
  }
  return out;
}

}  // namespace posemod
