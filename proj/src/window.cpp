#include "posemod/window.hpp"

#include <numeric>

#include "posemod/init.hpp"

namespace posemod {

std::string to_string(WindowMode mode) {
  switch (mode) {
    case WindowMode::Full: return "full";
    case WindowMode::OnlySpatial: return "only_spatial";
    case WindowMode::OnlyFeature: return "only_feature";
    case WindowMode::NoWindow: return "no_window";
  }
  return "full";
}

WindowMode parse_window_mode(const std::string& text) {
  if (text == "full") return WindowMode::Full;
  if (text == "only_spatial") return WindowMode::OnlySpatial;
  if (text == "only_feature") return WindowMode::OnlyFeature;
  if (text == "no_window") return WindowMode::NoWindow;
  throw SchemaError("unknown window mode '" + text + "'");
}

Tensor spatial_window(const std::vector<Tensor>& xbar, const Tensor& valid_mask, double alpha,
                      double beta) {
  std::vector<Tensor> cols;
  cols.reserve(xbar.size());
  for (const auto& xb : xbar) {
    // ||x||^beta as (||x||^2)^(beta/2) keeps the gradient finite at the part centre.
    const Tensor r2 = row_sums(xb * xb);
    cols.push_back(exp(scale(pow(r2, beta / 2.0), -alpha)));
  }
  Tensor wp = concat_cols(cols);
  if (valid_mask.defined()) wp = wp * valid_mask;
  return wp;
}

Tensor reweight_positions(const std::vector<Tensor>& xbar, const Tensor& w) {
  std::vector<Tensor> cols;
  cols.reserve(xbar.size());
  for (std::size_t i = 0; i < xbar.size(); ++i) cols.push_back(xbar[i] * slice_cols(w, i, i + 1));
  return concat_cols(cols);
}

Tensor validity_mask(const RelativeCoords& rc, const std::vector<std::size_t>& rows) {
  const std::size_t B = rc.bones;
  std::vector<double> m;
  if (rows.empty()) {
    m.reserve(rc.valid.size());
    for (auto v : rc.valid) m.push_back(v ? 1.0 : 0.0);
    return Tensor::from(rc.points, B, std::move(m));
  }
  m.reserve(rows.size() * B);
  for (auto r : rows)
    for (std::size_t b = 0; b < B; ++b) m.push_back(rc.valid[r * B + b] ? 1.0 : 0.0);
  return Tensor::from(rows.size(), B, std::move(m));
}

WindowFunction::WindowFunction(std::size_t bones, std::size_t gdim,
                               std::vector<std::size_t> layer_widths, WindowConfig config,
                               ParameterStore& params, Rng& rng, const std::string& prefix)
    : config_(config), bones_(bones), layer_widths_(std::move(layer_widths)) {
  const std::size_t dc = config_.fourier_dim, df = config_.part_feature_dim;
  w_c_ = params.add(prefix + "fourier/w", 3, dc, normal_values(rng, 3 * dc, config_.fourier_bandwidth),
                    config_.fourier_trainable);

  const std::size_t fan = dc + gdim;
  fp_wx_ = params.add(prefix + "part/w_x", dc, df, uniform_values(rng, dc * df, sine_bound(fan)));
  fp_wg_ = params.add(prefix + "part/w_g", gdim, df, uniform_values(rng, gdim * df, sine_bound(fan)));
  fp_b_ = params.add(prefix + "part/b", 1, df, uniform_values(rng, df, linear_bound(fan)));

  const std::size_t hw = config_.window_hidden;
  fw1_w_ = params.add(prefix + "feature/w1", df, hw, uniform_values(rng, df * hw, sine_bound(df)));
  fw1_b_ = params.add(prefix + "feature/b1", 1, hw, uniform_values(rng, hw, linear_bound(df)));
  fw2_w_ = params.add(prefix + "feature/w2", hw, bones, uniform_values(rng, hw * bones, linear_bound(hw)));
  fw2_b_ = params.add(prefix + "feature/b2", 1, bones, std::vector<double>(bones, 0.0));

  const std::size_t hq = config_.freq_hidden;
  const std::size_t nq = config_.theta_per_channel
                             ? std::accumulate(layer_widths_.begin(), layer_widths_.end(), std::size_t{0})
                             : layer_widths_.size();
  fq1_w_ = params.add(prefix + "freq/w1", gdim, hq, uniform_values(rng, gdim * hq, sine_bound(gdim)));
  fq1_b_ = params.add(prefix + "freq/b1", 1, hq, uniform_values(rng, hq, linear_bound(gdim)));
  // theta starts near one so the backbone begins as a plain sine network.
  fq2_w_ = params.add(prefix + "freq/w2", hq, nq, uniform_values(rng, hq * nq, config_.theta_init_noise));
  fq2_b_ = params.add(prefix + "freq/b2", 1, nq, std::vector<double>(nq, 1.0));
}

WindowPoseContext WindowFunction::prepare(const Tensor& bone_features) const {
  if (bone_features.rows() != bones_) throw ShapeError("bone feature count mismatch");
  return {bone_features, matmul(bone_features, fp_wg_) + fp_b_};
}

PartPointFeatures WindowFunction::part_point_features(const std::vector<Tensor>& xbar,
                                                      const Tensor& wp,
                                                      const WindowPoseContext& ctx) const {
  PartPointFeatures out;
  for (std::size_t i = 0; i < bones_; ++i) {
    Tensor xdot = sin(matmul(xbar[i], w_c_));
    Tensor fp = sin(matmul(xdot, fp_wx_) + slice_rows(ctx.feature_bias, i, i + 1));
    out.fw.push_back(fp * slice_cols(wp, i, i + 1));
    out.xdot.push_back(std::move(xdot));
    out.fp.push_back(std::move(fp));
  }
  return out;
}

Tensor WindowFunction::feature_window(const PartPointFeatures& features) const {
  const Tensor pooled = elementwise_max(features.fw);
  return sigmoid(matmul(sin(matmul(pooled, fw1_w_) + fw1_b_), fw2_w_) + fw2_b_);
}

Tensor WindowFunction::combine(const Tensor& wp, const Tensor& wf, const Tensor& valid_mask) const {
  switch (config_.mode) {
    case WindowMode::Full: return wp * wf;
    case WindowMode::OnlySpatial: return wp;
    case WindowMode::OnlyFeature: return wf * valid_mask;
    case WindowMode::NoWindow: return valid_mask;
  }
  return wp * wf;
}

Tensor WindowFunction::aggregate(const Tensor& w, const Tensor& bone_features) const {
  return matmul(w, bone_features);
}

std::vector<Tensor> WindowFunction::predict_frequencies(const Tensor& fm) const {
  const Tensor all = matmul(sin(matmul(fm, fq1_w_) + fq1_b_), fq2_w_) + fq2_b_;
  std::vector<Tensor> theta;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer_widths_.size(); ++l) {
    const std::size_t width = config_.theta_per_channel ? layer_widths_[l] : 1;
    theta.push_back(slice_cols(all, offset, offset + width));
    offset += width;
  }
  return theta;
}

WindowOutput WindowFunction::forward(const std::vector<Tensor>& xbar, const Tensor& valid_mask,
                                     const WindowPoseContext& ctx, bool predict_theta) const {
  if (xbar.size() != bones_) throw ShapeError("window expects one x̄ block per bone");
  WindowOutput out;
  out.wp = spatial_window(xbar, valid_mask, config_.alpha, config_.beta);
  out.features = part_point_features(xbar, out.wp, ctx);
  out.wf = feature_window(out.features);
  out.w = combine(out.wp, out.wf, valid_mask);
  out.fm = aggregate(out.w, ctx.bone_features);
  if (predict_theta) out.theta = predict_frequencies(out.fm);
  out.xtilde = reweight_positions(xbar, out.w);
  return out;
}

}  // namespace posemod
