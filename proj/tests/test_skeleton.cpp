#include <gtest/gtest.h>

#include <cmath>

#include "posemod/error.hpp"
#include "posemod/gradcheck.hpp"
#include "posemod/rng.hpp"
#include "posemod/skeleton.hpp"

using namespace posemod;

namespace {

Rot6 random_rot6(Rng& rng) {
  Rot6 w;
  for (auto& x : w) x = rng.uniform(-1, 1);
  return w;
}

SkeletonTopology chain(std::size_t n, Vec3 offset) {
  SkeletonTopology t;
  for (std::size_t i = 0; i < n; ++i) {
    t.names.push_back("b" + std::to_string(i));
    t.parent.push_back(static_cast<int>(i) - 1);
    t.rest_offset.push_back(i == 0 ? Vec3{0, 0, 0} : offset);
  }
  return t;
}

double max_abs_diff(const Mat3& a, const Mat3& b) {
  double e = 0;
  for (int i = 0; i < 9; ++i) e = std::max(e, std::fabs(a[i] - b[i]));
  return e;
}

}  // namespace

TEST(Rot6d, CanonicalFrameIsIdentity) {
  EXPECT_EQ(rot6d_to_matrix(Rot6{1, 0, 0, 0, 1, 0}), identity3());
}

TEST(Rot6d, QuarterTurnAboutZ) {
  // Columns b1 = (0,1,0), b2 = (-1,0,0), b3 = b1 x b2 = (0,0,1).
  const Mat3 expected{0, -1, 0, 1, 0, 0, 0, 0, 1};
  EXPECT_LT(max_abs_diff(rot6d_to_matrix(Rot6{0, 1, 0, -1, 0, 0}), expected), 1e-15);
}

TEST(Rot6d, RandomInputsAreProperRotations) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const Mat3 r = rot6d_to_matrix(random_rot6(rng));
    const Mat3 rtr = matmul(transpose(r), r);
    ASSERT_LT(max_abs_diff(rtr, identity3()), 1e-9);
    ASSERT_NEAR(determinant(r), 1.0, 1e-9);
  }
}

TEST(Rot6d, TensorAndPlainVersionsAgree) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Rot6 w = random_rot6(rng);
    const Mat3 plain = rot6d_to_matrix(w);
    const Tensor t = rot6d_to_matrix(Tensor::row({w.begin(), w.end()}));
    // Near-parallel random columns amplify rounding differences.
    for (int k = 0; k < 9; ++k) EXPECT_NEAR(t.data()[k], plain[k], 1e-12);
  }
}

TEST(Rot6d, DegenerateInputsAreRejected) {
  EXPECT_THROW(rot6d_to_matrix(Rot6{0, 0, 0, 0, 1, 0}), InvalidArgument);
  EXPECT_THROW(rot6d_to_matrix(Rot6{1, 0, 0, 2, 0, 0}), InvalidArgument);
  EXPECT_THROW(rot6d_to_matrix(Tensor::row({1e-9, 0, 0, 0, 1, 0})), InvalidArgument);
}

TEST(Rot6d, MatrixRoundTrip) {
  Rng rng(3);
  const Mat3 r = rot6d_to_matrix(random_rot6(rng));
  EXPECT_LT(max_abs_diff(rot6d_to_matrix(matrix_to_rot6d(r)), r), 1e-14);
}

// Dense path between two random parameter vectors: consecutive rotations stay close.
TEST(Rot6d, ContinuousAlongDensePaths) {
  Rng rng(4);
  for (int path = 0; path < 20; ++path) {
    const Rot6 a = random_rot6(rng), b = random_rot6(rng);
    const int steps = 2000;
    Mat3 prev = rot6d_to_matrix(a);
    double worst_ratio = 0;
    for (int s = 1; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      Rot6 w;
      for (int k = 0; k < 6; ++k) w[k] = (1 - t) * a[k] + t * b[k];
      double step_len = 0;
      for (int k = 0; k < 6; ++k) step_len += std::pow((b[k] - a[k]) / steps, 2);
      step_len = std::sqrt(step_len);
      Mat3 cur;
      try {
        cur = rot6d_to_matrix(w);
      } catch (const InvalidArgument&) {
        continue;
      }
      worst_ratio = std::max(worst_ratio, max_abs_diff(cur, prev) / step_len);
      prev = cur;
    }
    // Gram-Schmidt is Lipschitz away from degeneracy; jumps would show ratios near 1/step.
    EXPECT_LT(worst_ratio, 200.0);
  }
}

TEST(ForwardKinematics, SingleRootIdentity) {
  const BoneTransforms t = forward_kinematics(chain(1, {0, 0, 0}), Pose::identity(1));
  const Mat4 eye{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  EXPECT_EQ(t.bone_to_world[0], eye);
  EXPECT_EQ(t.world_to_bone[0], eye);
}

TEST(ForwardKinematics, TwoBoneChainOrigins) {
  SkeletonTopology topo = chain(3, {0, 1, 0});
  const BoneTransforms t = forward_kinematics(topo, Pose::identity(3));
  EXPECT_NEAR(t.bone_to_world[2][3], 0.0, 1e-15);
  EXPECT_NEAR(t.bone_to_world[2][7], 2.0, 1e-15);
  EXPECT_NEAR(t.bone_to_world[2][11], 0.0, 1e-15);
}

TEST(ForwardKinematics, MatchesHandComposedMatrices) {
  Rng rng(5);
  SkeletonTopology topo = chain(2, {0.3, 1.2, -0.4});
  for (int trial = 0; trial < 50; ++trial) {
    Pose pose;
    pose.omega = {random_rot6(rng), random_rot6(rng)};
    const Mat3 r0 = rot6d_to_matrix(pose.omega[0]);
    const Mat3 r1 = rot6d_to_matrix(pose.omega[1]);
    const Mat4 m0 = rigid(r0, {0, 0, 0});
    // Child: T0 * [R1 | offset].
    const Mat4 local1 = rigid(r1, {0.3, 1.2, -0.4});
    Mat4 m1{};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) m1[i * 4 + j] += m0[i * 4 + k] * local1[k * 4 + j];
    const BoneTransforms t = forward_kinematics(topo, pose);
    for (int k = 0; k < 16; ++k) {
      ASSERT_NEAR(t.bone_to_world[0][k], m0[k], 1e-12);
      ASSERT_NEAR(t.bone_to_world[1][k], m1[k], 1e-12);
    }
  }
}

TEST(ForwardKinematics, InverseRoundTrip) {
  Rng rng(6);
  SkeletonTopology topo = chain(4, {0.2, 0.9, 0.1});
  Pose pose;
  for (int i = 0; i < 4; ++i) pose.omega.push_back(random_rot6(rng));
  const BoneTransforms t = forward_kinematics(topo, pose);
  for (int i = 0; i < 4; ++i) {
    const Vec3 p{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const Vec3 q = transform_point(t.bone_to_world[i], transform_point(t.world_to_bone[i], p));
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(q[k], p[k], 1e-12);
    EXPECT_EQ(t.bone_to_world[i][12], 0.0);
    EXPECT_EQ(t.bone_to_world[i][15], 1.0);
  }
}

TEST(ForwardKinematics, PoseShapeMismatchThrows) {
  EXPECT_THROW(forward_kinematics(chain(2, {0, 1, 0}), Tensor::zeros(3, 6)), ShapeError);
}

TEST(RelativeCoords, PointAtBoneOrigin) {
  SkeletonTopology topo = chain(2, {0, 1, 0});
  const BoneFrames f = forward_kinematics(topo, Pose::identity(2).to_tensor());
  const Tensor scales = Tensor::filled(2, 3, 0.5);
  const RelativeCoords rc = to_relative(Tensor::row({0, 1, 0}), f, scales);
  for (double v : rc.xhat[1].data()) EXPECT_EQ(v, 0.0);
  for (double v : rc.xbar[1].data()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(rc.is_valid(0, 1));
}

TEST(RelativeCoords, ComponentwiseScale) {
  SkeletonTopology topo = chain(1, {0, 0, 0});
  const BoneFrames f = forward_kinematics(topo, Pose::identity(1).to_tensor());
  const RelativeCoords rc = to_relative(Tensor::row({2, 0, 0}), f, Tensor::row({0.4, 1, 1}));
  EXPECT_DOUBLE_EQ(rc.xbar[0].at(0, 0), 0.8);
  EXPECT_TRUE(rc.is_valid(0, 0));
  EXPECT_TRUE(rc.any_valid[0]);
}

TEST(RelativeCoords, FarPointIsCulled) {
  SkeletonTopology topo = chain(3, {0, 1, 0});
  const BoneFrames f = forward_kinematics(topo, Pose::identity(3).to_tensor());
  const RelativeCoords rc = to_relative(Tensor::row({50, 0, 0}), f, Tensor::filled(3, 3, 0.5));
  EXPECT_FALSE(rc.any_valid[0]);
}

TEST(RelativeCoords, ValidityIsComponentwiseBox) {
  SkeletonTopology topo = chain(1, {0, 0, 0});
  const BoneFrames f = forward_kinematics(topo, Pose::identity(1).to_tensor());
  // Corner (0.9,0.9,0.9) has norm > 1 but lies inside the box.
  const RelativeCoords rc = to_relative(Tensor::from(2, 3, {0.9, 0.9, 0.9, 1.01, 0, 0}), f, Tensor::filled(1, 3, 1.0));
  EXPECT_TRUE(rc.is_valid(0, 0));
  EXPECT_FALSE(rc.is_valid(1, 0));
}

TEST(RelativeCoords, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  SkeletonTopology topo = chain(3, {0.1, 0.8, 0.0});
  std::vector<double> pv(18);
  for (auto& x : pv) x = rng.uniform(-1, 1);
  const Tensor pose = Tensor::parameter("pose", 3, 6, pv);
  const Tensor log_s = Tensor::parameter("log_s", 3, 3, std::vector<double>(9, std::log(0.5)));
  const Tensor pts = Tensor::parameter("pts", 4, 3, {0.1, 0.2, 0.3, -0.5, 1.0, 0.2, 0.4, -0.3, 0.9, 1.2, 0.4, -0.6});
  auto fn = [&] {
    const RelativeCoords rc = to_relative(pts, forward_kinematics(topo, pose), part_scales(log_s));
    Tensor s = Tensor::scalar(0.0);
    for (std::size_t b = 0; b < 3; ++b) s = s + sum(sin(rc.xbar[b] * Tensor::row({1.0, -2.0, 0.5})));
    return s;
  };
  const GradCheckResult r = finite_difference_check(fn, {pose, log_s, pts});
  EXPECT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(SkeletonTopology, ValidationRejectsBadForests) {
  SkeletonTopology t = chain(3, {0, 1, 0});
  t.parent[1] = 2;
  EXPECT_THROW(t.validate(), SchemaError);
  SkeletonTopology two_roots = chain(2, {0, 1, 0});
  two_roots.parent[1] = -1;
  EXPECT_THROW(two_roots.validate(), SchemaError);
}

TEST(SkeletonFiles, JsonRoundTrip) {
  SkeletonTopology t = chain(3, {0.25, 1, -0.5});
  const SkeletonTopology back = parse_skeleton(skeleton_to_json(t));
  EXPECT_EQ(back.names, t.names);
  EXPECT_EQ(back.parent, t.parent);
  EXPECT_EQ(back.rest_offset, t.rest_offset);

  Rng rng(9);
  std::vector<PoseFrame> frames(2);
  for (int i = 0; i < 2; ++i) {
    frames[i].id = i * 7;
    for (int b = 0; b < 3; ++b) frames[i].pose.omega.push_back(random_rot6(rng));
  }
  const auto poses = parse_poses(poses_to_json(frames, t), t);
  ASSERT_EQ(poses.size(), 2u);
  EXPECT_EQ(poses[1].id, 7);
  EXPECT_EQ(poses[1].pose.omega, frames[1].pose.omega);
}

TEST(SkeletonFiles, SchemaViolationsAreReported) {
  EXPECT_THROW(parse_skeleton("{\"bones\": [{\"name\": \"a\"}]}"), SchemaError);
  EXPECT_THROW(parse_skeleton("not json"), SchemaError);
  const SkeletonTopology t = chain(2, {0, 1, 0});
  EXPECT_THROW(parse_poses(R"({"bones":["b0","b1"],"frames":[{"id":0,"omega":[[1,0,0,0,1,0]]}]})", t),
               SchemaError);
  EXPECT_THROW(parse_poses(R"({"bones":["x","b1"],"frames":[]})", t), SchemaError);
}
