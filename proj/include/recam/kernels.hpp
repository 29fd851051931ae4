#pragma once

#include <cstdint>

namespace recam {

// Execution backend for the data-parallel kernels. Every kernel assigns each
// output row to exactly one thread and keeps a fixed reduction order inside
// the row, so results are bitwise identical across backends and thread
// counts. The serial backend is kept for testing and as the baseline in the
// kernel benchmark.
enum class Backend { Serial, OpenMP };

void set_backend(Backend b);
Backend backend();

namespace kernels {

// All matmul kernels accumulate into out (callers zero-initialize).
// out[m x n] += a[m x k] * b[k x n]
void matmul_nn(const double* a, const double* b, double* out, int64_t m,
               int64_t k, int64_t n);
// out[m x n] += a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* out, int64_t m,
               int64_t k, int64_t n);
// out[k x n] += a[m x k]^T * b[m x n]
void matmul_tn(const double* a, const double* b, double* out, int64_t m,
               int64_t k, int64_t n);

}  // namespace kernels
}  // namespace recam
