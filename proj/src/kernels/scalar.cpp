#include "rsyn/kernels.hpp"

namespace rsyn::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double sum_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void gemm_scalar(bool transA, bool transB, std::size_t m, std::size_t n, std::size_t k,
                 const double* A, std::size_t lda, const double* B, std::size_t ldb, double* C,
                 std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = transA ? A[p * lda + i] : A[i * lda + p];
      if (transB) {
        for (std::size_t j = 0; j < n; ++j) c[j] += a * B[j * ldb + p];
      } else {
        const double* b = B + p * ldb;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", dot_scalar, axpy_scalar, sum_scalar, gemm_scalar};
  return table;
}

}  // namespace rsyn::kernels
