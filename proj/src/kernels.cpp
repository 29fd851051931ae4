#include "recam/kernels.hpp"

#include <atomic>

namespace recam {

namespace {
std::atomic<Backend> g_backend{Backend::OpenMP};
}

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

namespace kernels {

void matmul_nn(const double* a, const double* b, double* out, int64_t m,
               int64_t k, int64_t n) {
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* out_row = out + i * n;
    const double* a_row = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = a_row[kk];
      const double* b_row = b + kk * n;
      for (int64_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* out, int64_t m,
               int64_t k, int64_t n) {
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* out_row = out + i * n;
    const double* a_row = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const double* b_row = b + j * k;
      double acc = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) acc += a_row[kk] * b_row[kk];
      out_row[j] += acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* out, int64_t m,
               int64_t k, int64_t n) {
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t r = 0; r < k; ++r) {
    double* out_row = out + r * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = a[i * k + r];
      const double* b_row = b + i * n;
      for (int64_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

}  // namespace kernels
}  // namespace recam
