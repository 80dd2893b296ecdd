#include "posemod/skeleton.hpp"

#include <cmath>

#include "json.hpp"
#include "posemod/io.hpp"

namespace posemod {

using nlohmann::json;

namespace {

constexpr double kDegenerateNorm = 1e-8;

Tensor cross_rows(const Tensor& a, const Tensor& b) {
  auto c = [](const Tensor& t, std::size_t i) { return slice_cols(t, i, i + 1); };
  const Tensor parts[3] = {c(a, 1) * c(b, 2) - c(a, 2) * c(b, 1),
                           c(a, 2) * c(b, 0) - c(a, 0) * c(b, 2),
                           c(a, 0) * c(b, 1) - c(a, 1) * c(b, 0)};
  return concat_cols(parts);
}

}  // namespace

int SkeletonTopology::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::vector<int>> SkeletonTopology::children() const {
  std::vector<std::vector<int>> out(bone_count());
  for (std::size_t i = 0; i < bone_count(); ++i)
    if (parent[i] >= 0) out[static_cast<std::size_t>(parent[i])].push_back(static_cast<int>(i));
  return out;
}

void SkeletonTopology::validate() const {
  if (parent.empty()) throw SchemaError("skeleton has no bones");
  if (names.size() != parent.size() || rest_offset.size() != parent.size())
    throw SchemaError("skeleton arrays have inconsistent lengths");
  int roots = 0;
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (parent[i] < 0) {
      ++roots;
    } else if (static_cast<std::size_t>(parent[i]) >= i) {
      throw SchemaError("bone '" + names[i] + "' appears before its parent");
    }
  }
  if (roots != 1) throw SchemaError("skeleton must have exactly one root");
}

Pose Pose::identity(std::size_t bones) {
  Pose p;
  p.omega.assign(bones, Rot6{1, 0, 0, 0, 1, 0});
  return p;
}

Tensor Pose::to_tensor() const {
  std::vector<double> d;
  d.reserve(omega.size() * 6);
  for (const auto& w : omega) d.insert(d.end(), w.begin(), w.end());
  return Tensor::from(omega.size(), 6, std::move(d));
}

Mat3 rot6d_to_matrix(const Rot6& w) {
  const Vec3 a1{w[0], w[1], w[2]};
  const Vec3 a2{w[3], w[4], w[5]};
  if (norm(a1) < kDegenerateNorm) throw InvalidArgument("degenerate 6-D rotation (first column)");
  const Vec3 b1 = normalized(a1);
  const Vec3 u = a2 - dot(b1, a2) * b1;
  if (norm(u) < kDegenerateNorm) throw InvalidArgument("degenerate 6-D rotation (parallel columns)");
  const Vec3 b2 = normalized(u);
  const Vec3 b3 = cross(b1, b2);
  return {b1[0], b2[0], b3[0], b1[1], b2[1], b3[1], b1[2], b2[2], b3[2]};
}

Tensor rot6d_to_matrix(const Tensor& omega) {
  if (omega.rows() != 1 || omega.cols() != 6) throw ShapeError("6-D rotation must be [1,6]");
  auto d = omega.data();
  // Runs the plain version for its degeneracy checks.
  (void)rot6d_to_matrix(Rot6{d[0], d[1], d[2], d[3], d[4], d[5]});
  const Tensor a1 = slice_cols(omega, 0, 3);
  const Tensor a2 = slice_cols(omega, 3, 6);
  const Tensor b1 = a1 / l2_norm(a1);
  const Tensor u = a2 - row_sums(b1 * a2) * b1;
  const Tensor b2 = u / l2_norm(u);
  const Tensor b3 = cross_rows(b1, b2);
  const Tensor rows[3] = {b1, b2, b3};
  return transpose(concat_rows(rows));
}

Rot6 matrix_to_rot6d(const Mat3& r) { return {r[0], r[3], r[6], r[1], r[4], r[7]}; }

BoneFrames forward_kinematics(const SkeletonTopology& topo, const Tensor& pose) {
  const std::size_t n = topo.bone_count();
  if (pose.rows() != n || pose.cols() != 6) {
    throw ShapeError("pose " + to_string(pose.shape()) + " does not match " +
                     std::to_string(n) + " bones");
  }
  BoneFrames frames;
  frames.rotation.resize(n);
  frames.origin.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor local = rot6d_to_matrix(slice_rows(pose, i, i + 1));
    const auto& o = topo.rest_offset[i];
    const Tensor offset = Tensor::row({o[0], o[1], o[2]});
    const int p = topo.parent[i];
    if (p < 0) {
      frames.rotation[i] = local;
      frames.origin[i] = offset;
    } else {
      const auto& pr = frames.rotation[static_cast<std::size_t>(p)];
      frames.rotation[i] = matmul(pr, local);
      frames.origin[i] =
          frames.origin[static_cast<std::size_t>(p)] + matmul(offset, transpose(pr));
    }
  }
  return frames;
}

BoneTransforms forward_kinematics(const SkeletonTopology& topo, const Pose& pose) {
  NoGradGuard guard;
  const BoneFrames frames = forward_kinematics(topo, pose.to_tensor());
  BoneTransforms out;
  for (std::size_t i = 0; i < topo.bone_count(); ++i) {
    Mat3 r;
    std::copy_n(frames.rotation[i].data().begin(), 9, r.begin());
    const auto o = frames.origin[i].data();
    const Mat4 m = rigid(r, {o[0], o[1], o[2]});
    out.bone_to_world.push_back(m);
    out.world_to_bone.push_back(rigid_inverse(m));
  }
  return out;
}

std::vector<Mat3> local_rotations(const Pose& pose) {
  std::vector<Mat3> out;
  out.reserve(pose.omega.size());
  for (const auto& w : pose.omega) out.push_back(rot6d_to_matrix(w));
  return out;
}

RelativeCoords to_relative(const Tensor& points, const BoneFrames& frames, const Tensor& scales) {
  const std::size_t bones = frames.rotation.size();
  if (points.cols() != 3) throw ShapeError("points must be [P,3]");
  if (scales.rows() != bones || scales.cols() != 3) throw ShapeError("scales must be [bones,3]");
  RelativeCoords rc;
  rc.points = points.rows();
  rc.bones = bones;
  rc.valid.assign(rc.points * bones, 0);
  rc.any_valid.assign(rc.points, 0);
  for (std::size_t b = 0; b < bones; ++b) {
    // Row form of R^T (x - o): (x - o) R.
    Tensor xhat = matmul(points - frames.origin[b], frames.rotation[b]);
    Tensor xbar = xhat * slice_rows(scales, b, b + 1);
    const auto v = xbar.data();
    for (std::size_t p = 0; p < rc.points; ++p) {
      const bool inside = std::fabs(v[p * 3]) <= 1.0 && std::fabs(v[p * 3 + 1]) <= 1.0 &&
                          std::fabs(v[p * 3 + 2]) <= 1.0;
      rc.valid[p * bones + b] = inside;
      rc.any_valid[p] |= inside;
    }
    rc.xhat.push_back(std::move(xhat));
    rc.xbar.push_back(std::move(xbar));
  }
  return rc;
}

Tensor part_scales(const Tensor& log_scales) { return exp(log_scales); }

// ---- files -----------------------------------------------------------------------------

SkeletonTopology parse_skeleton(const std::string& text) {
  SkeletonTopology topo;
  try {
    const json doc = json::parse(text);
    for (const auto& bone : doc.at("bones")) {
      topo.names.push_back(bone.at("name").get<std::string>());
      const auto& parent = bone.at("parent");
      if (parent.is_null()) {
        topo.parent.push_back(-1);
      } else {
        const int idx = topo.index_of(parent.get<std::string>());
        if (idx < 0)
          throw SchemaError("bone '" + topo.names.back() + "' references unknown or later parent '" +
                            parent.get<std::string>() + "'");
        topo.parent.push_back(idx);
      }
      const auto off = bone.at("offset").get<std::vector<double>>();
      if (off.size() != 3) throw SchemaError("bone offset must have three components");
      topo.rest_offset.push_back({off[0], off[1], off[2]});
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("skeleton file: ") + e.what());
  }
  topo.validate();
  return topo;
}

SkeletonTopology load_skeleton(const std::filesystem::path& path) {
  return parse_skeleton(read_text_file(path));
}

std::string skeleton_to_json(const SkeletonTopology& topo) {
  json bones = json::array();
  for (std::size_t i = 0; i < topo.bone_count(); ++i) {
    json b;
    b["name"] = topo.names[i];
    b["parent"] = topo.parent[i] < 0 ? json(nullptr)
                                     : json(topo.names[static_cast<std::size_t>(topo.parent[i])]);
    b["offset"] = topo.rest_offset[i];
    bones.push_back(b);
  }
  return json{{"bones", bones}}.dump(2);
}

std::vector<PoseFrame> parse_poses(const std::string& text, const SkeletonTopology& topo) {
  std::vector<PoseFrame> frames;
  try {
    const json doc = json::parse(text);
    const auto names = doc.at("bones").get<std::vector<std::string>>();
    if (names != topo.names) throw SchemaError("pose file bone list does not match the skeleton");
    for (const auto& f : doc.at("frames")) {
      PoseFrame frame;
      frame.id = f.at("id").get<int>();
      const auto rows = f.at("omega").get<std::vector<std::vector<double>>>();
      if (rows.size() != topo.bone_count())
        throw SchemaError("pose frame " + std::to_string(frame.id) + " has wrong bone count");
      for (const auto& r : rows) {
        if (r.size() != 6) throw SchemaError("pose rows must have six entries");
        Rot6 w;
        std::copy(r.begin(), r.end(), w.begin());
        for (double x : w)
          if (!std::isfinite(x)) throw SchemaError("non-finite pose entry");
        frame.pose.omega.push_back(w);
      }
      frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("pose file: ") + e.what());
  }
  return frames;
}

std::vector<PoseFrame> load_poses(const std::filesystem::path& path, const SkeletonTopology& topo) {
  return parse_poses(read_text_file(path), topo);
}

std::string poses_to_json(const std::vector<PoseFrame>& frames, const SkeletonTopology& topo) {
  json out;
  out["bones"] = topo.names;
  json fs = json::array();
  for (const auto& f : frames) {
    json rows = json::array();
    for (const auto& w : f.pose.omega) rows.push_back(std::vector<double>(w.begin(), w.end()));
    fs.push_back({{"id", f.id}, {"omega", rows}});
  }
  out["frames"] = fs;
  return out.dump(2);
}

}  // namespace posemod
