#include "posemod/gradcheck.hpp"

#include <cmath>
#include <limits>

namespace posemod {

GradCheckResult finite_difference_check(const std::function<Tensor()>& fn,
                                        std::vector<Tensor> params, double step,
                                        std::size_t max_coords_per_param) {
  GradCheckResult result;
  auto fail = [&](const std::string& name, std::size_t idx) {
    result.finite = false;
    result.max_rel_error = std::numeric_limits<double>::infinity();
    result.worst_param = name;
    result.worst_index = idx;
    return result;
  };

  GradientStore grads;
  try {
    grads = backward(fn());
  } catch (const NumericError&) {
    return fail("<forward>", 0);
  }

  for (auto& p : params) {
    const std::vector<double> analytic = grads.gradient(p);
    auto values = p.mutable_data();
    const std::size_t n = values.size();
    std::size_t stride = 1;
    if (max_coords_per_param != 0 && n > max_coords_per_param)
      stride = (n + max_coords_per_param - 1) / max_coords_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      double plus = 0, minus = 0;
      try {
        NoGradGuard guard;
        values[i] = saved + step;
        plus = fn().item();
        values[i] = saved - step;
        minus = fn().item();
      } catch (const NumericError&) {
        values[i] = saved;
        return fail(p.name(), i);
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) return fail(p.name(), i);
      const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(numeric));
      ++result.coordinates;
      if (err > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = err;
        result.worst_param = p.name();
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace posemod
