#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posemod/geometry.hpp"
#include "posemod/tensor.hpp"

namespace posemod {

struct SkeletonTopology {
  std::vector<std::string> names;
  std::vector<int> parent;  // -1 for the root
  std::vector<Vec3> rest_offset;  // in the parent frame

  std::size_t bone_count() const { return parent.size(); }
  int index_of(const std::string& name) const;
  std::vector<std::vector<int>> children() const;
  // Throws SchemaError unless parents precede children and there is exactly one root.
  void validate() const;
};

using Rot6 = std::array<double, 6>;

struct Pose {
  std::vector<Rot6> omega;  // one row per bone

  static Pose identity(std::size_t bones);
  // [bones, 6] constant tensor.
  Tensor to_tensor() const;
};

struct PoseFrame {
  int id = 0;
  Pose pose;
};

// Plain rigid transforms for every bone.
struct BoneTransforms {
  std::vector<Mat4> bone_to_world;
  std::vector<Mat4> world_to_bone;
};

// Differentiable bone frames: world rotation [3,3] (columns are the bone axes) and origin [1,3].
struct BoneFrames {
  std::vector<Tensor> rotation;
  std::vector<Tensor> origin;
};

// Gram-Schmidt on the two 3-vectors packed in omega. Throws InvalidArgument on degenerate input.
Mat3 rot6d_to_matrix(const Rot6& omega);
Tensor rot6d_to_matrix(const Tensor& omega_row);
// The inverse map: the first two columns of `r`.
Rot6 matrix_to_rot6d(const Mat3& r);

BoneFrames forward_kinematics(const SkeletonTopology& topo, const Tensor& pose);
BoneTransforms forward_kinematics(const SkeletonTopology& topo, const Pose& pose);
// Local rotations as plain matrices.
std::vector<Mat3> local_rotations(const Pose& pose);

struct RelativeCoords {
  std::vector<Tensor> xhat;  // per bone, [points, 3]
  std::vector<Tensor> xbar;  // per bone, [points, 3]
  std::vector<std::uint8_t> valid;  // [points * bones], point-major
  std::vector<std::uint8_t> any_valid;  // [points]
  std::size_t points = 0;
  std::size_t bones = 0;

  bool is_valid(std::size_t point, std::size_t bone) const { return valid[point * bones + bone]; }
};

// Scaled bone-relative coordinates of world points [P,3]. `scales` is [bones, 3].
RelativeCoords to_relative(const Tensor& points, const BoneFrames& frames, const Tensor& scales);

// Part scales are stored as logarithms; the default start is s = 0.5 on every axis.
inline constexpr double kInitialPartScale = 0.5;
Tensor part_scales(const Tensor& log_scales);

SkeletonTopology parse_skeleton(const std::string& json_text);
SkeletonTopology load_skeleton(const std::filesystem::path& path);
std::string skeleton_to_json(const SkeletonTopology& topo);

std::vector<PoseFrame> parse_poses(const std::string& json_text, const SkeletonTopology& topo);
std::vector<PoseFrame> load_poses(const std::filesystem::path& path, const SkeletonTopology& topo);
std::string poses_to_json(const std::vector<PoseFrame>& frames, const SkeletonTopology& topo);

}  // namespace posemod
