#include "posemod/renderer.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "json.hpp"
#include "posemod/io.hpp"

namespace posemod {

using json = nlohmann::json;

void Camera::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw InvalidArgument("camera focal lengths must be positive");
  if (width == 0 || height == 0) throw InvalidArgument("camera image size must be nonzero");
  const Mat3 r{world_from_camera[0], world_from_camera[1], world_from_camera[2],
               world_from_camera[4], world_from_camera[5], world_from_camera[6],
               world_from_camera[8], world_from_camera[9], world_from_camera[10]};
  const Mat3 rtr = matmul(transpose(r), r);
  const Mat3 id = identity3();
  for (int i = 0; i < 9; ++i)
    if (std::abs(rtr[i] - id[i]) > 1e-6) throw InvalidArgument("camera rotation is not orthonormal");
  if (determinant(r) < 0) throw InvalidArgument("camera rotation is a reflection");
  if (world_from_camera[12] != 0 || world_from_camera[13] != 0 || world_from_camera[14] != 0 ||
      world_from_camera[15] != 1)
    throw InvalidArgument("camera extrinsics must be rigid");
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, std::size_t width,
               std::size_t height) {
  const Vec3 z = normalized(target - eye);
  const Vec3 x = normalized(cross(z, up));
  const Vec3 y = cross(z, x);
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  cam.world_from_camera = rigid({x[0], y[0], z[0], x[1], y[1], z[1], x[2], y[2], z[2]}, eye);
  return cam;
}

std::string cameras_to_json(const std::vector<Camera>& cameras) {
  json arr = json::array();
  for (const auto& c : cameras) {
    json m = json::array();
    for (int r = 0; r < 4; ++r)
      m.push_back({c.world_from_camera[4 * r], c.world_from_camera[4 * r + 1],
                   c.world_from_camera[4 * r + 2], c.world_from_camera[4 * r + 3]});
    arr.push_back({{"K", {{c.fx, 0.0, c.cx}, {0.0, c.fy, c.cy}, {0.0, 0.0, 1.0}}},
                   {"world_from_camera", m},
                   {"width", c.width},
                   {"height", c.height}});
  }
  return json{{"cameras", arr}}.dump(2);
}

std::vector<Camera> parse_cameras(const std::string& text) {
  std::vector<Camera> out;
  try {
    const json doc = json::parse(text);
    for (const auto& j : doc.at("cameras")) {
      Camera c;
      const auto k = j.at("K").get<std::vector<std::vector<double>>>();
      if (k.size() != 3 || k[0].size() != 3 || k[1].size() != 3)
        throw SchemaError("camera K must be 3x3");
      c.fx = k[0][0];
      c.cx = k[0][2];
      c.fy = k[1][1];
      c.cy = k[1][2];
      const auto m = j.at("world_from_camera").get<std::vector<std::vector<double>>>();
      if (m.size() != 4) throw SchemaError("world_from_camera must be 4x4");
      for (int r = 0; r < 4; ++r) {
        if (m[r].size() != 4) throw SchemaError("world_from_camera must be 4x4");
        for (int col = 0; col < 4; ++col) c.world_from_camera[4 * r + col] = m[r][col];
      }
      c.width = j.at("width").get<std::size_t>();
      c.height = j.at("height").get<std::size_t>();
      try {
        c.validate();
      } catch (const InvalidArgument& e) {
        throw SchemaError(e.what());
      }
      out.push_back(c);
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("camera file: ") + e.what());
  }
  return out;
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
  return parse_cameras(read_text_file(path));
}

Ray generate_ray(const Camera& camera, Pixel pixel) {
  if (pixel.x >= camera.width || pixel.y >= camera.height)
    throw InvalidArgument("pixel (" + std::to_string(pixel.x) + ", " + std::to_string(pixel.y) +
                          ") outside the image");
  const double u = (static_cast<double>(pixel.x) + 0.5 - camera.cx) / camera.fx;
  const double v = (static_cast<double>(pixel.y) + 0.5 - camera.cy) / camera.fy;
  const auto& m = camera.world_from_camera;
  const Vec3 d{m[0] * u + m[1] * v + m[2], m[4] * u + m[5] * v + m[6], m[8] * u + m[9] * v + m[10]};
  Ray ray;
  ray.origin = camera.center();
  ray.dir = normalized(d);
  return ray;
}

std::vector<Ray> generate_rays(const Camera& camera, const std::vector<Pixel>& pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& p : pixels) rays.push_back(generate_ray(camera, p));
  return rays;
}

std::pair<double, double> near_far(const Camera& camera, const BoundingSphere& bounds) {
  const double d = norm(camera.center() - bounds.center);
  const double near = std::max(d - bounds.radius, 1e-3);
  const double far = std::max(d + bounds.radius, near + 1e-3);
  return {near, far};
}

SampleSet stratified_sample(double near, double far, std::size_t n, bool jitter, Rng* rng) {
  if (n < 2) throw InvalidArgument("at least two samples per ray are required");
  if (!(far > near)) throw InvalidArgument("far must exceed near");
  if (jitter && rng == nullptr) throw InvalidArgument("jittered sampling needs a generator");
  const double width = (far - near) / static_cast<double>(n);
  SampleSet s;
  s.t.resize(n);
  s.delta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double offset = jitter ? rng->uniform() : 0.5;
    s.t[i] = near + (static_cast<double>(i) + offset) * width;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) s.delta[i] = s.t[i + 1] - s.t[i];
  s.delta[n - 1] = width;
  return s;
}

CompositeResult composite(std::span<const double> sigma, std::span<const double> colors,
                          std::span<const double> delta, const Vec3& background) {
  const std::size_t n = sigma.size();
  if (colors.size() != 3 * n || delta.size() != n)
    throw InvalidArgument("composite expects matching sample counts");
  CompositeResult r;
  r.weights.resize(n);
  r.transmittance.resize(n);
  // Weights are differences of accumulated opacity 1 - T, so their running sum never passes 1.
  double trans = 1.0, opacity = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sigma[i] < 0) throw InvalidArgument("negative density");
    if (!(delta[i] > 0)) throw InvalidArgument("non-positive sample spacing");
    r.transmittance[i] = trans;
    trans *= std::exp(-sigma[i] * delta[i]);
    const double next = 1.0 - trans;
    const double w = next - opacity;
    opacity = next;
    r.weights[i] = w;
    r.alpha += w;
    for (int c = 0; c < 3; ++c) r.color[c] += w * colors[3 * i + c];
  }
  for (int c = 0; c < 3; ++c) r.color[c] += (1.0 - r.alpha) * background[c];
  return r;
}

TensorComposite composite(const Tensor& sigma, const Tensor& color, const Tensor& delta,
                          std::size_t rays, const Vec3& background) {
  if (rays == 0 || sigma.rows() % rays != 0) throw ShapeError("sample count is not a multiple of rays");
  const std::size_t s = sigma.rows() / rays;
  if (sigma.cols() != 1 || color.cols() != 3 || color.rows() != sigma.rows())
    throw ShapeError("composite expects sigma [R*S,1] and color [R*S,3]");
  if (delta.rows() != rays || delta.cols() != s) throw ShapeError("delta must be [R,S]");
  const Tensor sd = reshape(sigma, rays, s) * delta;
  const Tensor alpha = add_scalar(scale(exp(scale(sd, -1.0)), -1.0), 1.0);
  const Tensor trans = exp(scale(exclusive_cumsum(sd), -1.0));
  TensorComposite out;
  out.weights = trans * alpha;
  out.alpha = row_sums(out.weights);
  const Tensor rest = add_scalar(scale(out.alpha, -1.0), 1.0);
  std::vector<Tensor> channels;
  for (std::size_t c = 0; c < 3; ++c) {
    const Tensor cc = reshape(slice_cols(color, c, c + 1), rays, s);
    channels.push_back(row_sums(out.weights * cc) + scale(rest, background[c]));
  }
  out.color = concat_cols(channels);
  return out;
}

RayBatchSamples sample_rays(const std::vector<Ray>& rays, std::size_t samples, bool jitter, Rng* rng) {
  const std::size_t r = rays.size();
  std::vector<double> pts(r * samples * 3), dirs(r * samples * 3), delta(r * samples);
  for (std::size_t i = 0; i < r; ++i) {
    const Ray& ray = rays[i];
    const SampleSet s = stratified_sample(ray.near, ray.far, samples, jitter, rng);
    for (std::size_t k = 0; k < samples; ++k) {
      const std::size_t row = i * samples + k;
      for (int c = 0; c < 3; ++c) {
        pts[3 * row + c] = ray.origin[c] + s.t[k] * ray.dir[c];
        dirs[3 * row + c] = ray.dir[c];
      }
      delta[row] = s.delta[k];
    }
  }
  return {Tensor::from(r * samples, 3, std::move(pts)), Tensor::from(r * samples, 3, std::move(dirs)),
          Tensor::from(r, samples, std::move(delta))};
}

TensorComposite render_rays(const RadianceField& field, const std::vector<Ray>& rays,
                            const RenderSettings& settings, Rng* rng) {
  const RayBatchSamples b = sample_rays(rays, settings.samples, settings.jitter, rng);
  const FieldSamples f = field(b.points, b.dirs);
  return composite(f.sigma, f.color, b.delta, rays.size(), settings.background);
}

std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("POSEMOD_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

RenderedImage render_image(const RadianceField& field, const Camera& camera,
                           const BoundingSphere& bounds, const RenderSettings& settings) {
  camera.validate();
  const auto [near, far] = near_far(camera, bounds);
  const std::size_t total = camera.width * camera.height;
  const std::size_t chunk = std::max<std::size_t>(settings.chunk_rays, 1);
  const std::size_t chunks = (total + chunk - 1) / chunk;
  RenderedImage out{Image(camera.width, camera.height), GrayImage(camera.width, camera.height)};

  auto render_chunk = [&](std::size_t c) {
    NoGradGuard no_grad;
    const std::size_t begin = c * chunk, end = std::min(total, begin + chunk);
    std::vector<Ray> rays;
    for (std::size_t i = begin; i < end; ++i) {
      Ray r = generate_ray(camera, {i % camera.width, i / camera.width});
      r.near = near;
      r.far = far;
      rays.push_back(r);
    }
    Rng rng(settings.seed * 0x9e3779b97f4a7c15ULL + c);
    const RayBatchSamples b = sample_rays(rays, settings.samples, settings.jitter, &rng);
    const FieldSamples f = field(b.points, b.dirs);
    const auto sig = f.sigma.data();
    const auto col = f.color.data();
    const auto del = b.delta.data();
    const std::size_t s = settings.samples;
    for (std::size_t k = 0; k < rays.size(); ++k) {
      const CompositeResult r = composite(sig.subspan(k * s, s), col.subspan(3 * k * s, 3 * s),
                                          del.subspan(k * s, s), settings.background);
      const std::size_t px = begin + k;
      for (int ch = 0; ch < 3; ++ch) out.image.data[3 * px + ch] = r.color[ch];
      out.alpha.data[px] = r.alpha;
    }
  };

  const std::size_t workers = std::min(resolve_workers(settings.workers), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) render_chunk(c);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) render_chunk(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace posemod
