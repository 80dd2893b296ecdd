#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "posemod/image.hpp"
#include "posemod/renderer.hpp"
#include "posemod/skeleton.hpp"

namespace posemod {

// A capsule attached to a bone: the segment from the bone origin along `axis` (bone-local).
struct Capsule {
  Vec3 axis{0, 1, 0};
  double length = 1;
  double radius = 0.1;
  Vec3 albedo{0.8, 0.8, 0.8};
};

// A disc painted on a capsule surface at fraction `t` along the axis and angle `phi` around it.
struct Decal {
  std::size_t bone = 0;
  double t = 0.5;
  double phi = 0;
  double radius = 0.05;
  Vec3 color{1, 1, 1};
};

struct TextureSpec {
  double base_frequency = 0.6;  // stripe cycles per scene unit along a straight segment
  double wrinkle_gain = 0.8;  // added cycles per unit per radian of joint bend
  double stripe_contrast = 0.45;
  std::vector<Decal> decals;
};

// Joint ranges (degrees) for the random pose sampler of the default chain.
struct PoseRanges {
  double torso_yaw = 20;
  double shoulder = 30;
  double elbow_max = 90;
  double hip = 25;
  double knee_max = 90;
};

struct SceneSpec {
  SkeletonTopology skeleton;
  std::vector<Capsule> capsules;  // one per bone
  TextureSpec texture;
  PoseRanges ranges;
  double density_max = 40;
  double epsilon = 0.01;  // half-width of the surface transition
  double blend_scale = 0.05;  // colour blending distance between capsules
  Vec3 background{0, 0, 0};
  BoundingSphere bounds{{0.875, 0.125, 0}, 3.875};
  std::size_t image_size = 64;
  double focal = 105;
  double camera_distance = 11.0;
  double camera_elevation_deg = 10;
  std::size_t train_views = 6;  // azimuths on the training ring
  std::size_t train_frames = 30;
  std::size_t novel_view_frames = 8;
  std::size_t novel_pose_frames = 8;
  std::size_t render_samples = 128;  // ground-truth samples per ray

  void validate() const;
};

// Torso, upper arm, forearm, thigh and shin.
SceneSpec default_scene();
std::string scene_to_json(const SceneSpec& scene);
SceneSpec parse_scene(const std::string& text);

struct OracleSample {
  double sigma = 0;
  Vec3 color{};
  int bone = -1;  // capsule with the smallest signed distance
  double distance = 0;  // that signed distance
};

// Pose-dependent state: bone frames and per-joint bend angles.
struct OracleState {
  BoneTransforms transforms;
  std::vector<double> bend;  // geodesic angle of each bone's local rotation (0 for the root)
};

OracleState oracle_state(const SceneSpec& scene, const Pose& pose);
OracleSample oracle_field(const SceneSpec& scene, const OracleState& state, const Vec3& x);
OracleSample oracle_field(const SceneSpec& scene, const Pose& pose, const Vec3& x);
// Local stripe frequency at fraction t along a bone's capsule.
double local_frequency(const SceneSpec& scene, const OracleState& state, std::size_t bone, double t);

RadianceField oracle_radiance(const SceneSpec& scene, const Pose& pose);

struct OracleRender {
  Image image;
  GrayImage alpha;
  std::vector<int> labels;  // per pixel, bone of the heaviest sample, or -1 where alpha <= 0.5
};

OracleRender render_oracle(const SceneSpec& scene, const Pose& pose, const Camera& camera,
                           std::size_t samples);

// Pose built from the default chain's joint angles (degrees).
struct ChainAngles {
  double torso_yaw = 0, shoulder = 0, elbow = 0, hip = 0, knee = 0;
};
Pose chain_pose(const ChainAngles& angles);
ChainAngles sample_chain_angles(const PoseRanges& ranges, Rng& rng);

Camera ring_camera(const SceneSpec& scene, double azimuth_deg);

enum class Split { Train, NovelView, NovelPose };
std::string to_string(Split split);
Split parse_split(const std::string& text);

struct FrameRecord {
  int id = 0;
  Split split = Split::Train;
  std::size_t camera = 0;  // index into the camera list
  std::size_t pose = 0;  // index into the pose list
};

// Frames, cameras and poses of a dataset before rendering.
struct DatasetPlan {
  std::vector<FrameRecord> frames;
  std::vector<Camera> cameras;
  std::vector<PoseFrame> poses;
};

// Train frames cycle through the ring; novel-view frames reuse train poses at the azimuths halfway
// between ring cameras; novel-pose frames start with the straight pose and the pose with elbow and
// knee at 90 degrees, both seen from the front.
DatasetPlan plan_dataset(const SceneSpec& scene, std::uint64_t seed);

void generate_dataset(const SceneSpec& scene, std::uint64_t seed, const std::filesystem::path& out);

struct Frame {
  FrameRecord record;
  Image image;
  GrayImage mask;
};

struct Dataset {
  std::filesystem::path root;
  SkeletonTopology skeleton;
  std::vector<Camera> cameras;
  std::vector<PoseFrame> poses;
  std::vector<Frame> frames;
  BoundingSphere bounds;
  Vec3 background{};
  std::size_t render_samples = 0;

  std::vector<const Frame*> split(Split s) const;
  const Camera& camera_of(const Frame& f) const { return cameras.at(f.record.camera); }
  const Pose& pose_of(const Frame& f) const { return poses.at(f.record.pose).pose; }
};

// Reads images from the HDR dumps when present, otherwise from the PNGs.
Dataset load_dataset(const std::filesystem::path& root, bool prefer_hdr = true);
// Scene description stored next to a generated dataset.
SceneSpec load_dataset_scene(const std::filesystem::path& root);

}  // namespace posemod
