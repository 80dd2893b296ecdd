#include <algorithm>
#include <cmath>
#include <vector>

#include "kernels.hpp"

namespace posemod::kernels {
namespace {

// Every output element is accumulated as c = fma(a[i,p], b[p,j], c) for p = 0..k-1. The column
// tiling depends only on n, so a row's result never depends on the other rows of the batch.
typedef double v8 __attribute__((vector_size(64), aligned(8)));

template <std::size_t R, std::size_t V>
inline void vector_tile(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                        std::size_t i0, std::size_t j0, bool accumulate) {
  v8 acc[R][V];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < V; ++v)
      acc[r][v] = accumulate ? *reinterpret_cast<const v8*>(c + (i0 + r) * n + j0 + 8 * v) : v8{};
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * n + j0;
    v8 bv[V];
    for (std::size_t v = 0; v < V; ++v) bv[v] = *reinterpret_cast<const v8*>(bp + 8 * v);
    for (std::size_t r = 0; r < R; ++r) {
      const double av = a[(i0 + r) * k + p];
      for (std::size_t v = 0; v < V; ++v) acc[r][v] = acc[r][v] + av * bv[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < V; ++v) *reinterpret_cast<v8*>(c + (i0 + r) * n + j0 + 8 * v) = acc[r][v];
}

template <std::size_t R>
inline void scalar_column(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                          std::size_t i0, std::size_t j, bool accumulate) {
  double acc[R];
  for (std::size_t r = 0; r < R; ++r) acc[r] = accumulate ? c[(i0 + r) * n + j] : 0.0;
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t r = 0; r < R; ++r) acc[r] = std::fma(a[(i0 + r) * k + p], b[p * n + j], acc[r]);
  for (std::size_t r = 0; r < R; ++r) c[(i0 + r) * n + j] = acc[r];
}

template <std::size_t R>
inline void row_block(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                      std::size_t i0, bool accumulate) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) vector_tile<R, 2>(a, b, c, k, n, i0, j, accumulate);
  for (; j + 8 <= n; j += 8) vector_tile<R, 1>(a, b, c, k, n, i0, j, accumulate);
  for (; j < n; ++j) scalar_column<R>(a, b, c, k, n, i0, j, accumulate);
}

// c[m,n] (+)= a[m,k] * b[k,n]
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_block<4>(a, b, c, k, n, i, accumulate);
  for (; i < m; ++i) row_block<1>(a, b, c, k, n, i, accumulate);
}

// gb[i0..i0+R, j0..] += sum_p a[p, i0+r] * g[p, j0..] over rows p0..p1, in increasing p.
template <std::size_t R, std::size_t V>
inline void tn_tile(const double* a, const double* g, double* gb, std::size_t p0, std::size_t p1,
                    std::size_t k, std::size_t n, std::size_t i0, std::size_t j0) {
  v8 acc[R][V];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < V; ++v) acc[r][v] = *reinterpret_cast<const v8*>(gb + (i0 + r) * n + j0 + 8 * v);
  for (std::size_t p = p0; p < p1; ++p) {
    v8 gv[V];
    for (std::size_t v = 0; v < V; ++v) gv[v] = *reinterpret_cast<const v8*>(g + p * n + j0 + 8 * v);
    for (std::size_t r = 0; r < R; ++r) {
      const double av = a[p * k + i0 + r];
      for (std::size_t v = 0; v < V; ++v) acc[r][v] = acc[r][v] + av * gv[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < V; ++v) *reinterpret_cast<v8*>(gb + (i0 + r) * n + j0 + 8 * v) = acc[r][v];
}

template <std::size_t R>
inline void tn_row_block(const double* a, const double* g, double* gb, std::size_t p0, std::size_t p1,
                         std::size_t k, std::size_t n, std::size_t i0) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) tn_tile<R, 2>(a, g, gb, p0, p1, k, n, i0, j);
  for (; j + 8 <= n; j += 8) tn_tile<R, 1>(a, g, gb, p0, p1, k, n, i0, j);
  for (; j < n; ++j)
    for (std::size_t r = 0; r < R; ++r) {
      double acc = gb[(i0 + r) * n + j];
      for (std::size_t p = p0; p < p1; ++p) acc = std::fma(a[p * k + i0 + r], g[p * n + j], acc);
      gb[(i0 + r) * n + j] = acc;
    }
}

std::vector<double> transposed(const double* x, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = x[r * cols + c];
  return t;
}

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  gemm(a, b, c, m, k, n, false);
}

void matmul_tn_acc(const double* a, const double* g, double* gb, std::size_t m, std::size_t k,
                   std::size_t n) {
  // Chunks of rows keep the slices of a and g being reduced resident in cache.
  constexpr std::size_t kChunk = 128;
  for (std::size_t p0 = 0; p0 < m; p0 += kChunk) {
    const std::size_t p1 = std::min(m, p0 + kChunk);
    std::size_t i = 0;
    for (; i + 4 <= k; i += 4) tn_row_block<4>(a, g, gb, p0, p1, k, n, i);
    for (; i < k; ++i) tn_row_block<1>(a, g, gb, p0, p1, k, n, i);
  }
}

void matmul_nt_acc(const double* g, const double* b, double* ga, std::size_t m, std::size_t k,
                   std::size_t n) {
  const std::vector<double> bt = transposed(b, k, n);
  gemm(g, bt.data(), ga, m, n, k, true);
}

}  // namespace posemod::kernels
