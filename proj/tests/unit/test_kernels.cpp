#include <cmath>
#include <vector>

#include "doctest.h"
#include "rsyn/autograd.hpp"
#include "rsyn/kernels.hpp"

using namespace rsyn;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
    s = std::max(s, std::abs(b[i]));
  }
  return d / std::max(s, 1e-300);
}

}  // namespace

TEST_CASE("scalar table is always available") {
  const auto& s = kernels::scalar_table();
  CHECK(std::string(s.name) == "scalar");
  std::vector<double> x{1, 2, 3}, y{4, 5, 6};
  CHECK(s.dot(x.data(), y.data(), 3) == 32.0);
  s.axpy(2.0, x.data(), y.data(), 3);
  CHECK(y == std::vector<double>{6, 9, 12});
  CHECK(s.sum(x.data(), 3) == 6.0);
}

TEST_CASE("scalar gemm matches hand arithmetic in all transpose modes") {
  const auto& s = kernels::scalar_table();
  // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
  std::vector<double> A{1, 2, 3, 4}, B{5, 6, 7, 8};
  std::vector<double> C(4, 0.0);
  s.gemm(false, false, 2, 2, 2, A.data(), 2, B.data(), 2, C.data(), 2);
  CHECK(C == std::vector<double>{19, 22, 43, 50});
  C.assign(4, 0.0);
  s.gemm(true, false, 2, 2, 2, A.data(), 2, B.data(), 2, C.data(), 2);  // A^T B
  CHECK(C == std::vector<double>{26, 30, 38, 44});
  C.assign(4, 0.0);
  s.gemm(false, true, 2, 2, 2, A.data(), 2, B.data(), 2, C.data(), 2);  // A B^T
  CHECK(C == std::vector<double>{17, 23, 39, 53});
  C.assign(4, 1.0);
  s.gemm(true, true, 2, 2, 2, A.data(), 2, B.data(), 2, C.data(), 2);  // accumulates
  CHECK(C == std::vector<double>{24, 32, 35, 47});
}

TEST_CASE("avx2 variants agree with scalar reference") {
  const auto* v = kernels::avx2_table();
  if (!v || !kernels::cpu_has_avx2()) {
    MESSAGE("AVX2 unavailable; equivalence test skipped");
    return;
  }
  const auto& s = kernels::scalar_table();
  Rng rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 15u, 16u, 17u, 33u, 257u}) {
    auto x = random_vec(n, rng), y = random_vec(n, rng);
    const double ds = s.dot(x.data(), y.data(), n), dv = v->dot(x.data(), y.data(), n);
    CHECK(std::abs(ds - dv) <= 1e-12 * (1.0 + std::abs(ds)) * static_cast<double>(n + 1));
    CHECK(std::abs(s.sum(x.data(), n) - v->sum(x.data(), n)) <= 1e-12 * static_cast<double>(n + 1));
    auto ys = y, yv = y;
    s.axpy(0.37, x.data(), ys.data(), n);
    v->axpy(0.37, x.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ys[i] - yv[i]) <= 1e-15 * (1 + std::abs(ys[i])));
  }
  // Odd sizes exercise every tile remainder path.
  const std::size_t dims[][3] = {{1, 1, 1}, {4, 8, 3}, {5, 9, 7}, {13, 17, 11}, {64, 33, 40}, {3, 100, 2}};
  for (const auto& d : dims) {
    const std::size_t m = d[0], n = d[1], k = d[2];
    for (int ta = 0; ta < 2; ++ta) {
      for (int tb = 0; tb < 2; ++tb) {
        auto A = random_vec(m * k, rng), B = random_vec(k * n, rng), C0 = random_vec(m * n, rng);
        auto Cs = C0, Cv = C0;
        const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
        s.gemm(ta, tb, m, n, k, A.data(), lda, B.data(), ldb, Cs.data(), n);
        v->gemm(ta, tb, m, n, k, A.data(), lda, B.data(), ldb, Cv.data(), n);
        CHECK(max_rel_diff(Cv, Cs) < 1e-13);
      }
    }
  }
}

TEST_CASE("select switches the active table") {
  CHECK(kernels::select("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_FALSE(kernels::select("neon-ish"));
  if (kernels::cpu_has_avx2() && kernels::avx2_table()) {
    CHECK(kernels::select("avx2"));
    CHECK(std::string(kernels::active().name) == "avx2");
  }
}
