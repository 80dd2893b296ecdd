#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "posemod/geometry.hpp"
#include "posemod/image.hpp"
#include "posemod/rng.hpp"
#include "posemod/tensor.hpp"

namespace posemod {

// Pinhole camera looking down its +z axis; x right, y down (OpenCV convention).
struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  std::size_t width = 0, height = 0;
  Mat4 world_from_camera{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  Vec3 center() const { return {world_from_camera[3], world_from_camera[7], world_from_camera[11]}; }
  // Throws InvalidArgument on non-positive focals, empty size, or a non-orthonormal rotation.
  void validate() const;
};

// Camera at `eye` looking at `target` with world `up` roughly upwards in the image.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, std::size_t width,
               std::size_t height);

std::string cameras_to_json(const std::vector<Camera>& cameras);
std::vector<Camera> parse_cameras(const std::string& text);
std::vector<Camera> load_cameras(const std::filesystem::path& path);

struct Ray {
  Vec3 origin{};
  Vec3 dir{};
  double near = 0, far = 0;
};

struct Pixel {
  std::size_t x = 0, y = 0;
};

// Through pixel centres. Throws InvalidArgument for pixels outside the image.
Ray generate_ray(const Camera& camera, Pixel pixel);
std::vector<Ray> generate_rays(const Camera& camera, const std::vector<Pixel>& pixels);

// Scene bounds used to clip rays.
struct BoundingSphere {
  Vec3 center{};
  double radius = 1;
};

// [near, far] covering the sphere from this camera's centre; near is kept positive.
std::pair<double, double> near_far(const Camera& camera, const BoundingSphere& bounds);

struct SampleSet {
  std::vector<double> t;  // depths, increasing
  std::vector<double> delta;  // t[i+1]-t[i]; the last entry is one bin width
};

// n bins over [near, far]; bin centres without jitter, uniform within the bin with it.
SampleSet stratified_sample(double near, double far, std::size_t n, bool jitter, Rng* rng);

struct CompositeResult {
  Vec3 color{};
  double alpha = 0;
  std::vector<double> weights;
  std::vector<double> transmittance;
};

// Alpha compositing along one ray. `colors` holds 3 values per sample. Throws InvalidArgument on
// negative sigma or non-positive delta.
CompositeResult composite(std::span<const double> sigma, std::span<const double> colors,
                          std::span<const double> delta, const Vec3& background);

struct TensorComposite {
  Tensor color;  // [R, 3]
  Tensor alpha;  // [R, 1]
  Tensor weights;  // [R, S]
};

// Differentiable compositing of R rays with S samples each. sigma is [R*S, 1] and color
// [R*S, 3], ray-major; delta is [R, S].
TensorComposite composite(const Tensor& sigma, const Tensor& color, const Tensor& delta,
                          std::size_t rays, const Vec3& background);

// sigma [P,1] and color [P,3] at world points [P,3] seen along unit directions [P,3].
struct FieldSamples {
  Tensor sigma;
  Tensor color;
};
using RadianceField = std::function<FieldSamples(const Tensor& points, const Tensor& dirs)>;

struct RenderSettings {
  std::size_t samples = 64;
  Vec3 background{0, 0, 0};
  bool jitter = false;
  std::uint64_t seed = 0;  // jitter stream; each chunk of rays derives its own generator
  std::size_t chunk_rays = 256;
  // Worker threads for image rendering; 0 reads POSEMOD_WORKERS (default 1).
  std::size_t workers = 0;
};

// Sample points and directions for a batch of rays, ray-major.
struct RayBatchSamples {
  Tensor points;  // [R*S, 3]
  Tensor dirs;  // [R*S, 3]
  Tensor delta;  // [R, S]
};
RayBatchSamples sample_rays(const std::vector<Ray>& rays, std::size_t samples, bool jitter, Rng* rng);

// Differentiable render of a ray batch, [R, 3].
TensorComposite render_rays(const RadianceField& field, const std::vector<Ray>& rays,
                            const RenderSettings& settings, Rng* rng);

struct RenderedImage {
  Image image;
  GrayImage alpha;
};

// Renders every pixel without recording gradients.
RenderedImage render_image(const RadianceField& field, const Camera& camera,
                           const BoundingSphere& bounds, const RenderSettings& settings);

std::size_t resolve_workers(std::size_t requested);

}  // namespace posemod
