// Built with -ffast-math so the loops below lower to the vector math library.
// Every element goes through the same 8-wide path (the tail is padded), which keeps
// results independent of an element's position in the buffer.
#include <cmath>
#include <cstring>

#include "kernels.hpp"

namespace posemod::kernels {
namespace {

constexpr std::size_t kLanes = 8;

template <typename Fn>
inline void map_padded(const double* in, double* out, std::size_t n, Fn fn) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    fn(in + i, out + i);
  }
  if (i < n) {
    double src[kLanes] = {};
    double dst[kLanes];
    std::memcpy(src, in + i, (n - i) * sizeof(double));
    fn(src, dst);
    std::memcpy(out + i, dst, (n - i) * sizeof(double));
  }
}

inline void sin8(const double* __restrict in, double* __restrict out) {
#pragma omp simd
  for (std::size_t k = 0; k < kLanes; ++k) out[k] = std::sin(in[k]);
}

inline void cos8(const double* __restrict in, double* __restrict out) {
#pragma omp simd
  for (std::size_t k = 0; k < kLanes; ++k) out[k] = std::cos(in[k]);
}

}  // namespace

void vsin(const double* in, double* out, std::size_t n) { map_padded(in, out, n, sin8); }
void vcos(const double* in, double* out, std::size_t n) { map_padded(in, out, n, cos8); }

}  // namespace posemod::kernels
