#pragma once

#include <cstddef>

// Hot loops shared by the tensor ops. Each output row of the matrix kernels depends
// only on the matching input row, so results are independent of batch composition.
namespace posemod::kernels {

void vsin(const double* in, double* out, std::size_t n);
void vcos(const double* in, double* out, std::size_t n);

// c[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
// gb[k,n] += a[m,k]^T * g[m,n]
void matmul_tn_acc(const double* a, const double* g, double* gb, std::size_t m, std::size_t k,
                   std::size_t n);
// ga[m,k] += g[m,n] * b[k,n]^T
void matmul_nt_acc(const double* g, const double* b, double* ga, std::size_t m, std::size_t k,
                   std::size_t n);

}  // namespace posemod::kernels
