#include <cmath>
#include <numbers>

#include "rsyn/dsp.hpp"
#include "rsyn/error.hpp"

namespace rsyn::dsp {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::span<cdouble> x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) throw ContractError("fft_radix2 needs a power-of-two length, got " + std::to_string(n));
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  // Twiddles computed directly (not by recurrence) to keep error near 1 ulp.
  std::vector<cdouble> tw(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    tw[k] = {std::cos(a), std::sin(a)};
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2, step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cdouble u = x[i + k];
        const cdouble v = x[i + k + half] * tw[k * step];
        x[i + k] = u + v;
        x[i + k + half] = u - v;
      }
    }
  }
}

std::vector<cdouble> dft(std::span<const cdouble> x) {
  std::vector<cdouble> out(x.begin(), x.end());
  if (is_power_of_two(out.size())) {
    fft_radix2(out);
    return out;
  }
  const std::size_t n = x.size();
  for (std::size_t k = 0; k < n; ++k) {
    cdouble acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      // reduce k*j mod n first so the angle stays small
      const double a = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += x[j] * cdouble(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace rsyn::dsp
