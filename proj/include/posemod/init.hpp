#pragma once

#include <cmath>
#include <vector>

#include "posemod/rng.hpp"

namespace posemod {

inline std::vector<double> uniform_values(Rng& rng, std::size_t n, double bound) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

inline std::vector<double> normal_values(Rng& rng, std::size_t n, double stddev) {
  std::vector<double> v(n);
  for (auto& x : v) x = stddev * rng.normal();
  return v;
}

// Weight bound for sine-activated layers of a given fan-in.
inline double sine_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

inline double linear_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace posemod
