#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "posemod/error.hpp"
#include "posemod/io.hpp"
#include "posemod/metrics.hpp"
#include "posemod/synthetic.hpp"

using namespace posemod;
namespace fs = std::filesystem;

namespace {

SceneSpec tiny_scene() {
  SceneSpec s = default_scene();
  s.image_size = 20;
  s.focal = 105.0 * 20 / 64;
  s.train_frames = 4;
  s.novel_view_frames = 2;
  s.novel_pose_frames = 3;
  s.render_samples = 32;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Mean patch STD over pixels whose whole 5x5 patch shows `bone`, so silhouette contrast does not
// swamp the stripes. Rendered at twice the dataset resolution: at 64 px the forearm has no such pixels.
double mean_patch_std(const SceneSpec& scene, double elbow, int bone) {
  SceneSpec hi = scene;
  hi.image_size = 2 * scene.image_size;
  hi.focal = 2 * scene.focal;
  ChainAngles a;
  a.elbow = elbow;
  const OracleRender r = render_oracle(hi, chain_pose(a), ring_camera(hi, 0), 96);
  const GrayImage f = frequency_map(r.image);
  const long w = static_cast<long>(hi.image_size);
  double sum = 0;
  std::size_t n = 0;
  for (long y = 0; y < w; ++y)
    for (long x = 0; x < w; ++x) {
      bool inside = true;
      for (long dy = -2; dy <= 2 && inside; ++dy)
        for (long dx = -2; dx <= 2 && inside; ++dx) {
          const long xx = std::clamp(x + dx, 0L, w - 1), yy = std::clamp(y + dy, 0L, w - 1);
          inside = r.labels[yy * w + xx] == bone;
        }
      if (!inside) continue;
      sum += f.data[y * w + x];
      ++n;
    }
  EXPECT_GT(n, 50u);
  return sum / static_cast<double>(n);
}

}  // namespace

TEST(Scene, DefaultIsValidAndRoundTrips) {
  const SceneSpec s = default_scene();
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.skeleton.bone_count(), 5u);
  EXPECT_EQ(s.epsilon, 0.01);
  const SceneSpec back = parse_scene(scene_to_json(s));
  EXPECT_EQ(scene_to_json(back), scene_to_json(s));
  EXPECT_THROW(parse_scene("{\"capsules\": 1}"), SchemaError);
}

TEST(Scene, ValidationRejectsBadCapsules) {
  SceneSpec s = default_scene();
  s.capsules[1].radius = 0;
  EXPECT_THROW(s.validate(), SchemaError);
  s = default_scene();
  s.capsules.pop_back();
  EXPECT_THROW(s.validate(), SchemaError);
}

TEST(Oracle, DensityVanishesAwayFromSurface) {
  const SceneSpec s = default_scene();
  Rng rng(1);
  const OracleState st = oracle_state(s, chain_pose(sample_chain_angles(s.ranges, rng)));
  std::size_t outside = 0;
  for (int i = 0; i < 20000; ++i) {
    const Vec3 x = s.bounds.center + Vec3{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
    const OracleSample o = oracle_field(s, st, x);
    if (o.distance > 3 * s.epsilon) {
      ++outside;
      ASSERT_LT(o.sigma, 1e-6 * s.density_max);
    }
    if (o.distance < -3 * s.epsilon) ASSERT_EQ(o.sigma, s.density_max);
    for (int c = 0; c < 3; ++c) {
      ASSERT_GE(o.color[c], 0.0);
      ASSERT_LE(o.color[c], 1.0);
    }
  }
  EXPECT_GT(outside, 1000u);
}

TEST(Oracle, StraightJointUsesBaseFrequency) {
  const SceneSpec s = default_scene();
  const OracleState st = oracle_state(s, Pose::identity(5));
  for (std::size_t b = 0; b < 5; ++b)
    for (double t : {0.0, 0.3, 1.0}) EXPECT_EQ(local_frequency(s, st, b, t), s.texture.base_frequency);
}

TEST(Oracle, BendRaisesLocalFrequency) {
  const SceneSpec s = default_scene();
  ChainAngles a;
  a.elbow = 90;
  const OracleState st = oracle_state(s, chain_pose(a));
  EXPECT_NEAR(st.bend[2], std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(local_frequency(s, st, 2, 0.0), s.texture.base_frequency + s.texture.wrinkle_gain * std::numbers::pi / 2,
              1e-12);
  EXPECT_EQ(local_frequency(s, st, 2, 1.0), s.texture.base_frequency);
  EXPECT_GT(local_frequency(s, st, 1, 1.0), s.texture.base_frequency);
}

TEST(Oracle, BentElbowRaisesPatchStd) {
  const SceneSpec s = default_scene();
  EXPECT_GT(mean_patch_std(s, 90, 2), mean_patch_std(s, 0, 2));
}

TEST(Oracle, PatchStdNondecreasingInBend) {
  const SceneSpec s = default_scene();
  double prev = 0;
  for (double bend : {0.0, 30.0, 60.0, 90.0}) {
    const double v = mean_patch_std(s, bend, 2);
    EXPECT_GE(v, prev) << bend;
    prev = v;
  }
}

// Dense pose path through the straight elbow: no jumps in sigma or colour.
TEST(Oracle, ContinuousAlongPosePathThroughZeroBend) {
  const SceneSpec s = default_scene();
  Rng rng(2);
  std::vector<Vec3> probes;
  {
    ChainAngles a;
    const OracleState st = oracle_state(s, chain_pose(a));
    while (probes.size() < 50) {
      const Vec3 x = s.bounds.center + Vec3{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
      if (std::fabs(oracle_field(s, st, x).distance) < 0.3) probes.push_back(x);
    }
  }
  const int steps = 400;
  for (const Vec3& x : probes) {
    OracleSample prev{};
    for (int i = 0; i <= steps; ++i) {
      ChainAngles a;
      a.elbow = -2.0 + 4.0 * i / steps;
      a.knee = a.elbow;
      const OracleSample o = oracle_field(s, chain_pose(a), x);
      if (i > 0) {
        ASSERT_LT(std::fabs(o.sigma - prev.sigma), 0.05 * s.density_max) << i;
        for (int c = 0; c < 3; ++c) ASSERT_LT(std::fabs(o.color[c] - prev.color[c]), 0.05) << i;
      }
      prev = o;
    }
  }
}

TEST(Oracle, RenderHasForegroundAndLabels) {
  const SceneSpec s = default_scene();
  const OracleRender r = render_oracle(s, Pose::identity(5), ring_camera(s, 0), 64);
  std::vector<std::size_t> per_bone(5, 0);
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    if (r.labels[i] >= 0) ++per_bone[r.labels[i]];
    EXPECT_EQ(r.labels[i] >= 0, r.alpha.data[i] > 0.5);
  }
  for (std::size_t b = 0; b < 5; ++b) EXPECT_GT(per_bone[b], 0u) << b;
  // Border pixels are background.
  EXPECT_LT(r.alpha.at(0, 0), 1e-6);
}

TEST(Dataset, PlanSplitsAndPoses) {
  const SceneSpec s = default_scene();
  const DatasetPlan plan = plan_dataset(s, 3);
  std::size_t train = 0, view = 0, pose = 0;
  for (const auto& f : plan.frames) {
    if (f.split == Split::Train) ++train;
    if (f.split == Split::NovelView) {
      ++view;
      EXPECT_LT(f.pose, s.train_frames);
    }
    if (f.split == Split::NovelPose) {
      ++pose;
      for (std::size_t j = 0; j < s.train_frames; ++j) EXPECT_NE(plan.poses[f.pose].pose.omega, plan.poses[j].pose.omega);
    }
  }
  EXPECT_EQ(train, s.train_frames);
  EXPECT_EQ(view, s.novel_view_frames);
  EXPECT_EQ(pose, s.novel_pose_frames);
}

TEST(Dataset, NovelViewCamerasAreHeldOut) {
  const SceneSpec s = default_scene();
  const DatasetPlan plan = plan_dataset(s, 3);
  for (const auto& f : plan.frames) {
    if (f.split != Split::NovelView) continue;
    for (const auto& g : plan.frames)
      if (g.split == Split::Train)
        EXPECT_NE(plan.cameras[f.camera].world_from_camera, plan.cameras[g.camera].world_from_camera);
  }
}

TEST(Dataset, GenerationIsByteIdenticalPerSeed) {
  const SceneSpec s = tiny_scene();
  const fs::path root = fs::temp_directory_path() / "posemod_test_dataset";
  fs::remove_all(root);
  generate_dataset(s, 9, root / "a");
  generate_dataset(s, 9, root / "b");
  generate_dataset(s, 10, root / "c");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    ASSERT_TRUE(fs::exists(root / "b" / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(root / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 3u * 9u);
  EXPECT_NE(slurp(root / "a" / "poses.json"), slurp(root / "c" / "poses.json"));

  const Dataset ds = load_dataset(root / "a");
  EXPECT_EQ(ds.frames.size(), 9u);
  EXPECT_EQ(ds.split(Split::Train).size(), 4u);
  EXPECT_EQ(ds.render_samples, 32u);
  for (const auto& f : ds.frames) {
    double mass = 0;
    for (double m : f.mask.data) mass += m;
    EXPECT_GT(mass, 0.0) << f.record.id;
  }
  const Dataset png = load_dataset(root / "a", false);
  for (std::size_t k = 0; k < png.frames[0].image.data.size(); ++k)
    EXPECT_NEAR(png.frames[0].image.data[k], ds.frames[0].image.data[k], 0.5 / 255 + 1e-6);
  EXPECT_EQ(load_dataset_scene(root / "a").image_size, 20u);
  fs::remove_all(root);
}

TEST(Dataset, MissingDatasetIsAnIoError) {
  EXPECT_THROW(load_dataset(fs::temp_directory_path() / "posemod_no_such_dataset"), IoError);
}

TEST(Dataset, SplitNames) {
  for (auto s : {Split::Train, Split::NovelView, Split::NovelPose}) EXPECT_EQ(parse_split(to_string(s)), s);
  EXPECT_THROW(parse_split("test"), SchemaError);
}
