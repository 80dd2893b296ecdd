#pragma once

#include <functional>
#include <string>
#include <vector>

#include "posemod/tensor.hpp"

namespace posemod {

struct GradCheckResult {
  // max over coordinates of |analytic - numeric| / max(1, |numeric|); +inf on non-finite values
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  bool finite = true;
};

// Compares backward() against central differences. `fn` must rebuild the graph from the
// current values of `params` on every call. When `max_coords_per_param` is nonzero, an evenly
// strided subset of each parameter's coordinates is probed.
GradCheckResult finite_difference_check(const std::function<Tensor()>& fn,
                                        std::vector<Tensor> params, double step = 1e-5,
                                        std::size_t max_coords_per_param = 0);

}  // namespace posemod
