#pragma once

#include <cstdint>

namespace lgvi {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
// Backed by cblas_{s,d}gemm; the only place the project touches BLAS.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
          const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
          int64_t ldc);
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta, double* c,
          int64_t ldc);

// The model's GEMMs are small enough that BLAS thread wake-ups cost more than
// they save; long-running entry points pin the pool to one thread.
void set_blas_threads(int n);

}  // namespace lgvi
