#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops used by the tensor ops. Each kernel has
// a portable scalar reference and, where the CPU supports it, an AVX2+FMA
// variant. The variant is chosen once at startup (see active()) and can be
// forced with RSYN_KERNELS=scalar|avx2.

namespace rsyn::kernels {

struct KernelTable {
  const char* name;

  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);

  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);

  // C[m x n] += op(A) * op(B), row-major with leading dimensions.
  // op(A) is m x k, op(B) is k x n. transA means A is stored k x m.
  void (*gemm)(bool transA, bool transB, std::size_t m, std::size_t n, std::size_t k,
               const double* A, std::size_t lda, const double* B, std::size_t ldb, double* C,
               std::size_t ldc);
};

const KernelTable& scalar_table();

// nullptr when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// The table every op goes through.
const KernelTable& active();

// Override the active table; returns false if the name is unknown or the CPU
// cannot run it. Intended for tests and benchmarking.
bool select(std::string_view name);

}  // namespace rsyn::kernels
