#include "posemod/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "json.hpp"
#include "posemod/io.hpp"

namespace posemod {

using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr const char* kDatasetFormat = "posemod-dataset/1";

double deg(double d) { return d * kPi / 180.0; }

double smoothstep(double e0, double e1, double x) {
  const double s = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

// Two unit vectors completing `axis` to a right-handed frame.
std::pair<Vec3, Vec3> perpendiculars(const Vec3& axis) {
  const Vec3 ref = std::abs(axis[2]) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  const Vec3 e1 = normalized(cross(ref, axis));
  return {e1, cross(axis, e1)};
}

json vec(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 to_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw SchemaError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string frame_name(int id, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d%s", id, ext);
  return buf;
}

}  // namespace

void SceneSpec::validate() const {
  skeleton.validate();
  if (capsules.size() != skeleton.bone_count()) throw SchemaError("one capsule per bone is required");
  for (const auto& c : capsules) {
    if (!(c.radius > 0) || !(c.length > 0)) throw SchemaError("capsule radius and length must be positive");
    if (std::abs(norm(c.axis) - 1.0) > 1e-9) throw SchemaError("capsule axes must be unit vectors");
  }
  for (const auto& d : texture.decals)
    if (d.bone >= capsules.size() || !(d.radius > 0)) throw SchemaError("invalid decal");
  if (!(density_max > 0) || !(epsilon > 0) || !(blend_scale > 0)) throw SchemaError("invalid density settings");
  if (!(bounds.radius > 0) || image_size == 0 || !(focal > 0) || train_views == 0)
    throw SchemaError("invalid camera settings");
  if (train_frames == 0 || novel_view_frames == 0 || novel_pose_frames < 2)
    throw SchemaError("each split needs frames (novel_pose at least two)");
  if (render_samples < 2) throw SchemaError("render_samples must be at least 2");
}

SceneSpec default_scene() {
  // Lengths are in scene units; a part box of the initial scale spans four units per side.
  constexpr double u = 2.5;
  SceneSpec s;
  auto& sk = s.skeleton;
  sk.names = {"torso", "upper_arm", "forearm", "thigh", "shin"};
  sk.parent = {-1, 0, 1, 0, 3};
  sk.rest_offset = {{0, 0, 0}, {0.2 * u, 0.7 * u, 0}, {0.5 * u, 0, 0}, {0.12 * u, -0.1 * u, 0}, {0, -0.55 * u, 0}};
  s.capsules = {
      {{0, 1, 0}, 0.8 * u, 0.26 * u, {0.85, 0.55, 0.35}},
      {{1, 0, 0}, 0.5 * u, 0.12 * u, {0.3, 0.6, 0.85}},
      {{1, 0, 0}, 0.45 * u, 0.11 * u, {0.35, 0.8, 0.45}},
      {{0, -1, 0}, 0.55 * u, 0.14 * u, {0.8, 0.35, 0.55}},
      {{0, -1, 0}, 0.5 * u, 0.12 * u, {0.9, 0.8, 0.3}},
  };
  s.texture.base_frequency = 1.5 / u;
  s.texture.wrinkle_gain = 2.0 / u;
  s.texture.decals = {
      {0, 0.6, 0.0, 0.09 * u, {1.0, 1.0, 1.0}},
      {0, 0.3, kPi, 0.07 * u, {0.05, 0.05, 0.2}},
      {2, 0.7, 0.5 * kPi, 0.05 * u, {1.0, 1.0, 1.0}},
      {4, 0.5, -0.5 * kPi, 0.05 * u, {0.1, 0.1, 0.1}},
  };
  s.blend_scale = 0.02 * u;
  s.density_max = 100 / u;
  s.bounds = {{0.35 * u, 0.05 * u, 0}, 1.55 * u};
  s.camera_distance = 4.4 * u;
  s.focal = 105;
  return s;
}

std::string scene_to_json(const SceneSpec& s) {
  json caps = json::array();
  for (const auto& c : s.capsules)
    caps.push_back({{"axis", vec(c.axis)}, {"length", c.length}, {"radius", c.radius}, {"albedo", vec(c.albedo)}});
  json decals = json::array();
  for (const auto& d : s.texture.decals)
    decals.push_back({{"bone", s.skeleton.names.at(d.bone)},
                      {"t", d.t},
                      {"phi", d.phi},
                      {"radius", d.radius},
                      {"color", vec(d.color)}});
  json j;
  j["skeleton"] = json::parse(skeleton_to_json(s.skeleton));
  j["capsules"] = caps;
  j["texture"] = {{"base_frequency", s.texture.base_frequency},
                  {"wrinkle_gain", s.texture.wrinkle_gain},
                  {"stripe_contrast", s.texture.stripe_contrast},
                  {"decals", decals}};
  j["pose_ranges"] = {{"torso_yaw", s.ranges.torso_yaw}, {"shoulder", s.ranges.shoulder},
                      {"elbow_max", s.ranges.elbow_max}, {"hip", s.ranges.hip},
                      {"knee_max", s.ranges.knee_max}};
  j["density_max"] = s.density_max;
  j["epsilon"] = s.epsilon;
  j["blend_scale"] = s.blend_scale;
  j["background"] = vec(s.background);
  j["bounds"] = {{"center", vec(s.bounds.center)}, {"radius", s.bounds.radius}};
  j["image_size"] = s.image_size;
  j["focal"] = s.focal;
  j["camera_distance"] = s.camera_distance;
  j["camera_elevation_deg"] = s.camera_elevation_deg;
  j["train_views"] = s.train_views;
  j["train_frames"] = s.train_frames;
  j["novel_view_frames"] = s.novel_view_frames;
  j["novel_pose_frames"] = s.novel_pose_frames;
  j["render_samples"] = s.render_samples;
  return j.dump(2);
}

SceneSpec parse_scene(const std::string& text) {
  SceneSpec s = default_scene();
  try {
    const json j = json::parse(text);
    if (j.contains("skeleton")) {
      s.skeleton = parse_skeleton(j.at("skeleton").dump());
      if (!j.contains("capsules")) throw SchemaError("a custom skeleton needs capsules");
    }
    if (j.contains("capsules")) {
      s.capsules.clear();
      for (const auto& c : j.at("capsules"))
        s.capsules.push_back({to_vec(c.at("axis")), c.at("length").get<double>(), c.at("radius").get<double>(),
                              to_vec(c.at("albedo"))});
      if (!j.contains("texture") || !j.at("texture").contains("decals")) s.texture.decals.clear();
    }
    if (j.contains("texture")) {
      const auto& t = j.at("texture");
      read_if(t, "base_frequency", s.texture.base_frequency);
      read_if(t, "wrinkle_gain", s.texture.wrinkle_gain);
      read_if(t, "stripe_contrast", s.texture.stripe_contrast);
      if (t.contains("decals")) {
        s.texture.decals.clear();
        for (const auto& d : t.at("decals")) {
          const int bone = s.skeleton.index_of(d.at("bone").get<std::string>());
          if (bone < 0) throw SchemaError("decal references an unknown bone");
          s.texture.decals.push_back({static_cast<std::size_t>(bone), d.at("t").get<double>(),
                                      d.at("phi").get<double>(), d.at("radius").get<double>(),
                                      to_vec(d.at("color"))});
        }
      }
    }
    if (j.contains("pose_ranges")) {
      const auto& r = j.at("pose_ranges");
      read_if(r, "torso_yaw", s.ranges.torso_yaw);
      read_if(r, "shoulder", s.ranges.shoulder);
      read_if(r, "elbow_max", s.ranges.elbow_max);
      read_if(r, "hip", s.ranges.hip);
      read_if(r, "knee_max", s.ranges.knee_max);
    }
    read_if(j, "density_max", s.density_max);
    read_if(j, "epsilon", s.epsilon);
    read_if(j, "blend_scale", s.blend_scale);
    if (j.contains("background")) s.background = to_vec(j.at("background"));
    if (j.contains("bounds")) {
      s.bounds.center = to_vec(j.at("bounds").at("center"));
      s.bounds.radius = j.at("bounds").at("radius").get<double>();
    }
    read_if(j, "image_size", s.image_size);
    read_if(j, "focal", s.focal);
    read_if(j, "camera_distance", s.camera_distance);
    read_if(j, "camera_elevation_deg", s.camera_elevation_deg);
    read_if(j, "train_views", s.train_views);
    read_if(j, "train_frames", s.train_frames);
    read_if(j, "novel_view_frames", s.novel_view_frames);
    read_if(j, "novel_pose_frames", s.novel_pose_frames);
    read_if(j, "render_samples", s.render_samples);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scene file: ") + e.what());
  }
  s.validate();
  return s;
}

OracleState oracle_state(const SceneSpec& scene, const Pose& pose) {
  OracleState st;
  st.transforms = forward_kinematics(scene.skeleton, pose);
  const auto local = local_rotations(pose);
  st.bend.resize(local.size());
  for (std::size_t i = 0; i < local.size(); ++i)
    st.bend[i] = scene.skeleton.parent[i] < 0 ? 0.0 : rotation_angle(local[i]);
  return st;
}

double local_frequency(const SceneSpec& scene, const OracleState& state, std::size_t bone, double t) {
  double end = 0;
  for (std::size_t c = 0; c < scene.skeleton.bone_count(); ++c)
    if (scene.skeleton.parent[c] == static_cast<int>(bone)) end = std::max(end, state.bend[c]);
  const double bend = (1.0 - t) * state.bend[bone] + t * end;
  return scene.texture.base_frequency + scene.texture.wrinkle_gain * bend;
}

OracleSample oracle_field(const SceneSpec& scene, const OracleState& state, const Vec3& x) {
  const std::size_t n = scene.capsules.size();
  std::vector<double> dist(n), tpos(n);
  std::vector<Vec3> radial(n);
  OracleSample out;
  out.distance = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < n; ++b) {
    const Capsule& cap = scene.capsules[b];
    const Vec3 p = transform_point(state.transforms.world_to_bone[b], x);
    const double t = std::clamp(dot(p, cap.axis) / cap.length, 0.0, 1.0);
    radial[b] = p - (t * cap.length) * cap.axis;
    tpos[b] = t;
    dist[b] = norm(radial[b]) - cap.radius;
    if (dist[b] < out.distance) {
      out.distance = dist[b];
      out.bone = static_cast<int>(b);
    }
  }
  out.sigma = scene.density_max * (1.0 - smoothstep(-scene.epsilon, scene.epsilon, out.distance));

  // Colours of all capsules blended by how close each surface is.
  double wsum = 0;
  const auto& tex = scene.texture;
  for (std::size_t b = 0; b < n; ++b) {
    const double w = std::exp(-(dist[b] - out.distance) / scene.blend_scale);
    if (w == 0.0) continue;
    const Capsule& cap = scene.capsules[b];
    const double u = tpos[b] * cap.length;
    const double f = local_frequency(scene, state, b, tpos[b]);
    const double stripe = 1.0 - tex.stripe_contrast + tex.stripe_contrast * std::sin(2.0 * kPi * f * u);
    Vec3 c = stripe * cap.albedo;
    for (const auto& d : tex.decals) {
      if (d.bone != b) continue;
      const auto [e1, e2] = perpendiculars(cap.axis);
      const double phi = std::atan2(dot(radial[b], e2), dot(radial[b], e1));
      const double du = u - d.t * cap.length, dv = cap.radius * wrap_angle(phi - d.phi);
      const double m = 1.0 - smoothstep(0.8 * d.radius, 1.2 * d.radius, std::sqrt(du * du + dv * dv));
      c = (1.0 - m) * c + m * d.color;
    }
    out.color = out.color + w * c;
    wsum += w;
  }
  out.color = (1.0 / wsum) * out.color;
  return out;
}

OracleSample oracle_field(const SceneSpec& scene, const Pose& pose, const Vec3& x) {
  return oracle_field(scene, oracle_state(scene, pose), x);
}

RadianceField oracle_radiance(const SceneSpec& scene, const Pose& pose) {
  auto st = std::make_shared<OracleState>(oracle_state(scene, pose));
  return [scene, st](const Tensor& points, const Tensor&) {
    const auto p = points.data();
    const std::size_t n = points.rows();
    std::vector<double> sigma(n), color(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const OracleSample s = oracle_field(scene, *st, {p[3 * i], p[3 * i + 1], p[3 * i + 2]});
      sigma[i] = s.sigma;
      for (int c = 0; c < 3; ++c) color[3 * i + c] = s.color[c];
    }
    return FieldSamples{Tensor::from(n, 1, std::move(sigma)), Tensor::from(n, 3, std::move(color))};
  };
}

OracleRender render_oracle(const SceneSpec& scene, const Pose& pose, const Camera& camera,
                           std::size_t samples) {
  const OracleState st = oracle_state(scene, pose);
  const auto [near, far] = near_far(camera, scene.bounds);
  const SampleSet ss = stratified_sample(near, far, samples, false, nullptr);
  OracleRender out{Image(camera.width, camera.height), GrayImage(camera.width, camera.height),
                   std::vector<int>(camera.width * camera.height, -1)};
  std::vector<double> sigma(samples), color(3 * samples);
  std::vector<int> bone(samples);
  for (std::size_t y = 0; y < camera.height; ++y) {
    for (std::size_t x = 0; x < camera.width; ++x) {
      const Ray ray = generate_ray(camera, {x, y});
      for (std::size_t k = 0; k < samples; ++k) {
        const OracleSample s = oracle_field(scene, st, ray.origin + ss.t[k] * ray.dir);
        sigma[k] = s.sigma;
        bone[k] = s.bone;
        for (int c = 0; c < 3; ++c) color[3 * k + c] = s.color[c];
      }
      const CompositeResult r = composite(sigma, color, ss.delta, scene.background);
      const std::size_t px = y * camera.width + x;
      for (int c = 0; c < 3; ++c) out.image.data[3 * px + c] = r.color[c];
      out.alpha.data[px] = r.alpha;
      if (r.alpha > 0.5) {
        const auto it = std::max_element(r.weights.begin(), r.weights.end());
        out.labels[px] = bone[static_cast<std::size_t>(it - r.weights.begin())];
      }
    }
  }
  return out;
}

Pose chain_pose(const ChainAngles& a) {
  Pose p = Pose::identity(5);
  p.omega[0] = matrix_to_rot6d(axis_angle({0, 1, 0}, deg(a.torso_yaw)));
  p.omega[1] = matrix_to_rot6d(axis_angle({0, 0, 1}, deg(a.shoulder)));
  p.omega[2] = matrix_to_rot6d(axis_angle({0, 0, 1}, deg(a.elbow)));
  p.omega[3] = matrix_to_rot6d(axis_angle({1, 0, 0}, deg(a.hip)));
  p.omega[4] = matrix_to_rot6d(axis_angle({1, 0, 0}, deg(a.knee)));
  return p;
}

ChainAngles sample_chain_angles(const PoseRanges& r, Rng& rng) {
  ChainAngles a;
  a.torso_yaw = rng.uniform(-r.torso_yaw, r.torso_yaw);
  a.shoulder = rng.uniform(-r.shoulder, r.shoulder);
  a.elbow = rng.uniform(0, r.elbow_max);
  a.hip = rng.uniform(-r.hip, r.hip);
  a.knee = rng.uniform(0, r.knee_max);
  return a;
}

Camera ring_camera(const SceneSpec& scene, double azimuth_deg) {
  const double az = deg(azimuth_deg), el = deg(scene.camera_elevation_deg);
  const Vec3 dir{std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)};
  const Vec3 eye = scene.bounds.center + scene.camera_distance * dir;
  return look_at(eye, scene.bounds.center, {0, 1, 0}, scene.focal, scene.image_size, scene.image_size);
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::NovelView: return "novel_view";
    case Split::NovelPose: return "novel_pose";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "novel_view") return Split::NovelView;
  if (text == "novel_pose") return Split::NovelPose;
  throw SchemaError("unknown split '" + text + "'");
}

namespace {

// Pose of the default chain, or a generic bend about z for every non-root bone of other skeletons.
Pose sample_pose(const SceneSpec& scene, Rng& rng) {
  const auto& names = scene.skeleton.names;
  if (names == default_scene().skeleton.names) return chain_pose(sample_chain_angles(scene.ranges, rng));
  Pose p = Pose::identity(names.size());
  for (std::size_t i = 1; i < names.size(); ++i)
    p.omega[i] = matrix_to_rot6d(axis_angle({0, 0, 1}, deg(rng.uniform(0, scene.ranges.elbow_max))));
  return p;
}

Pose bent_pose(const SceneSpec& scene) {
  if (scene.skeleton.names == default_scene().skeleton.names) {
    ChainAngles a;
    a.elbow = 90;
    a.knee = 90;
    return chain_pose(a);
  }
  Pose p = Pose::identity(scene.skeleton.bone_count());
  for (std::size_t i = 1; i < p.omega.size(); ++i) p.omega[i] = matrix_to_rot6d(axis_angle({0, 0, 1}, kPi / 2));
  return p;
}

void check_bounds(const SceneSpec& scene, const Pose& pose) {
  const OracleState st = oracle_state(scene, pose);
  for (std::size_t b = 0; b < scene.capsules.size(); ++b) {
    const Capsule& c = scene.capsules[b];
    for (double t : {0.0, 1.0}) {
      const Vec3 p = transform_point(st.transforms.bone_to_world[b], (t * c.length) * c.axis);
      if (norm(p - scene.bounds.center) + c.radius > scene.bounds.radius)
        throw InvalidArgument("bone '" + scene.skeleton.names[b] + "' leaves the scene bounding sphere");
    }
  }
}

}  // namespace

DatasetPlan plan_dataset(const SceneSpec& scene, std::uint64_t seed) {
  scene.validate();
  Rng rng(seed);
  DatasetPlan plan;
  const double step = 360.0 / static_cast<double>(scene.train_views);
  int id = 0;
  auto add_frame = [&](Split split, std::size_t pose, double azimuth) {
    plan.frames.push_back({id++, split, plan.cameras.size(), pose});
    plan.cameras.push_back(ring_camera(scene, azimuth));
  };
  for (std::size_t i = 0; i < scene.train_frames; ++i) {
    plan.poses.push_back({static_cast<int>(plan.poses.size()), sample_pose(scene, rng)});
    add_frame(Split::Train, i, step * static_cast<double>(i % scene.train_views));
  }
  for (std::size_t k = 0; k < scene.novel_view_frames; ++k) {
    const std::size_t pose = k * scene.train_frames / scene.novel_view_frames;
    add_frame(Split::NovelView, pose, step * static_cast<double>(k % scene.train_views) + step / 2);
  }
  for (std::size_t k = 0; k < scene.novel_pose_frames; ++k) {
    Pose p = k == 0   ? Pose::identity(scene.skeleton.bone_count())
             : k == 1 ? bent_pose(scene)
                      : sample_pose(scene, rng);
    const std::size_t index = plan.poses.size();
    plan.poses.push_back({static_cast<int>(index), std::move(p)});
    add_frame(Split::NovelPose, index, k < 2 ? 0.0 : step * static_cast<double>(k % scene.train_views));
  }
  for (const auto& p : plan.poses) check_bounds(scene, p.pose);
  for (std::size_t i = scene.train_frames; i < plan.poses.size(); ++i)
    for (std::size_t j = 0; j < scene.train_frames; ++j)
      if (plan.poses[i].pose.omega == plan.poses[j].pose.omega)
        throw InvalidArgument("novel pose coincides with a training pose");
  return plan;
}

void generate_dataset(const SceneSpec& scene, std::uint64_t seed, const std::filesystem::path& out) {
  const DatasetPlan plan = plan_dataset(scene, seed);
  std::filesystem::create_directories(out);
  write_text_file(out / "skeleton.json", skeleton_to_json(scene.skeleton));
  write_text_file(out / "scene.json", scene_to_json(scene));
  write_text_file(out / "cameras.json", cameras_to_json(plan.cameras));
  write_text_file(out / "poses.json", poses_to_json(plan.poses, scene.skeleton));

  json frames = json::array();
  json splits = {{"train", json::array()}, {"novel_view", json::array()}, {"novel_pose", json::array()}};
  for (const auto& f : plan.frames) {
    const OracleRender r =
        render_oracle(scene, plan.poses[f.pose].pose, plan.cameras[f.camera], scene.render_samples);
    GrayImage mask(r.alpha.width, r.alpha.height);
    for (std::size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = r.alpha.data[i] > 0.5 ? 1.0 : 0.0;
    const std::string img = "images/" + frame_name(f.id, ".png");
    const std::string msk = "masks/" + frame_name(f.id, ".png");
    const std::string hdr = "hdr/" + frame_name(f.id, ".hdr");
    write_png(out / img, r.image);
    write_png(out / msk, mask);
    write_hdr(out / hdr, r.image);
    frames.push_back({{"id", f.id},
                      {"split", to_string(f.split)},
                      {"camera", f.camera},
                      {"pose", f.pose},
                      {"image", img},
                      {"mask", msk},
                      {"hdr", hdr}});
    splits[to_string(f.split)].push_back(f.id);
  }
  json manifest;
  manifest["format"] = kDatasetFormat;
  manifest["seed"] = seed;
  manifest["width"] = scene.image_size;
  manifest["height"] = scene.image_size;
  manifest["background"] = vec(scene.background);
  manifest["bounds"] = {{"center", vec(scene.bounds.center)}, {"radius", scene.bounds.radius}};
  manifest["render_samples"] = scene.render_samples;
  manifest["frames"] = frames;
  manifest["splits"] = splits;
  write_text_file(out / "manifest.json", manifest.dump(2));
}

std::vector<const Frame*> Dataset::split(Split s) const {
  std::vector<const Frame*> out;
  for (const auto& f : frames)
    if (f.record.split == s) out.push_back(&f);
  return out;
}

Dataset load_dataset(const std::filesystem::path& root, bool prefer_hdr) {
  if (!std::filesystem::exists(root / "manifest.json"))
    throw IoError("no dataset manifest in " + root.string());
  Dataset ds;
  ds.root = root;
  ds.skeleton = load_skeleton(root / "skeleton.json");
  ds.cameras = load_cameras(root / "cameras.json");
  ds.poses = load_poses(root / "poses.json", ds.skeleton);
  try {
    const json m = json::parse(read_text_file(root / "manifest.json"));
    if (m.value("format", std::string()) != kDatasetFormat) throw SchemaError("unsupported dataset format");
    ds.background = to_vec(m.at("background"));
    ds.bounds.center = to_vec(m.at("bounds").at("center"));
    ds.bounds.radius = m.at("bounds").at("radius").get<double>();
    ds.render_samples = m.value("render_samples", std::size_t{0});
    for (const auto& f : m.at("frames")) {
      Frame fr;
      fr.record.id = f.at("id").get<int>();
      fr.record.split = parse_split(f.at("split").get<std::string>());
      fr.record.camera = f.at("camera").get<std::size_t>();
      fr.record.pose = f.at("pose").get<std::size_t>();
      if (fr.record.camera >= ds.cameras.size() || fr.record.pose >= ds.poses.size())
        throw SchemaError("frame " + std::to_string(fr.record.id) + " references a missing camera or pose");
      const auto hdr = f.contains("hdr") ? root / f.at("hdr").get<std::string>() : std::filesystem::path();
      if (prefer_hdr && !hdr.empty() && std::filesystem::exists(hdr))
        fr.image = read_hdr(hdr);
      else
        fr.image = read_png(root / f.at("image").get<std::string>());
      fr.mask = read_png_gray(root / f.at("mask").get<std::string>());
      const Camera& cam = ds.cameras[fr.record.camera];
      if (fr.image.width != cam.width || fr.image.height != cam.height || fr.mask.width != cam.width ||
          fr.mask.height != cam.height)
        throw SchemaError("frame " + std::to_string(fr.record.id) + " image size disagrees with its camera");
      ds.frames.push_back(std::move(fr));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
  return ds;
}

SceneSpec load_dataset_scene(const std::filesystem::path& root) {
  return parse_scene(read_text_file(root / "scene.json"));
}

}  // namespace posemod
