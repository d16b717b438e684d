// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after cpu_has_avx2() returned true.

#include "rsyn/kernels.hpp"

#include <immintrin.h>

#include <vector>

namespace rsyn::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
    a2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), a2);
    a3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), a3);
  }
  for (; i + 4 <= n; i += 4) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  }
  double s = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i];
  return s;
}

// C[4 x 8] += A[4 x k] * B[k x 8]
inline void tile_4x8(std::size_t k, const double* A, std::size_t lda, const double* B,
                     std::size_t ldb, double* C, std::size_t ldc) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(B + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(B + p * ldb + 4);
    __m256d a = _mm256_broadcast_sd(A + p);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_broadcast_sd(A + lda + p);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_broadcast_sd(A + 2 * lda + p);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_broadcast_sd(A + 3 * lda + p);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
  }
  auto acc = [](double* c, __m256d v) { _mm256_storeu_pd(c, _mm256_add_pd(_mm256_loadu_pd(c), v)); };
  acc(C, c00);
  acc(C + 4, c01);
  acc(C + ldc, c10);
  acc(C + ldc + 4, c11);
  acc(C + 2 * ldc, c20);
  acc(C + 2 * ldc + 4, c21);
  acc(C + 3 * ldc, c30);
  acc(C + 3 * ldc + 4, c31);
}

// One row of C, columns [j0, n).
inline void row_tail(std::size_t j0, std::size_t n, std::size_t k, const double* a,
                     const double* B, std::size_t ldb, double* c) {
  std::size_t j = j0;
  for (; j + 8 <= n; j += 8) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d va = _mm256_broadcast_sd(a + p);
      s0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(B + p * ldb + j), s0);
      s1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(B + p * ldb + j + 4), s1);
    }
    _mm256_storeu_pd(c + j, _mm256_add_pd(_mm256_loadu_pd(c + j), s0));
    _mm256_storeu_pd(c + j + 4, _mm256_add_pd(_mm256_loadu_pd(c + j + 4), s1));
  }
  for (; j + 4 <= n; j += 4) {
    __m256d s0 = _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      s0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(B + p * ldb + j), s0);
    }
    _mm256_storeu_pd(c + j, _mm256_add_pd(_mm256_loadu_pd(c + j), s0));
  }
  for (; j < n; ++j) {
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += a[p] * B[p * ldb + j];
    c[j] += s;
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* A, std::size_t lda,
             const double* B, std::size_t ldb, double* C, std::size_t ldc) {
  const std::size_t n8 = n - n % 8;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < n8; j += 8) {
      tile_4x8(k, A + i * lda, lda, B + j, ldb, C + i * ldc + j, ldc);
    }
    if (n8 < n) {
      for (std::size_t r = 0; r < 4; ++r) {
        row_tail(n8, n, k, A + (i + r) * lda, B, ldb, C + (i + r) * ldc);
      }
    }
  }
  for (; i < m; ++i) row_tail(0, n, k, A + i * lda, B, ldb, C + i * ldc);
}

// Row-major transpose of a rows x cols matrix with leading dimension ld.
std::vector<double> packed_transpose(const double* X, std::size_t rows, std::size_t cols,
                                     std::size_t ld) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = X[r * ld + c];
  }
  return out;
}

void gemm_avx2(bool transA, bool transB, std::size_t m, std::size_t n, std::size_t k,
               const double* A, std::size_t lda, const double* B, std::size_t ldb, double* C,
               std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  std::vector<double> packedA, packedB;
  if (transA) {
    packedA = packed_transpose(A, k, m, lda);
    A = packedA.data();
    lda = k;
  }
  if (transB) {
    packedB = packed_transpose(B, n, k, ldb);
    B = packedB.data();
    ldb = n;
  }
  gemm_nn(m, n, k, A, lda, B, ldb, C, ldc);
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{"avx2", dot_avx2, axpy_avx2, sum_avx2, gemm_avx2};
  return &table;
}

}  // namespace rsyn::kernels
