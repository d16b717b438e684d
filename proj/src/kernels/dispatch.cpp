#include <cstdlib>
#include <string_view>

#include "rsyn/kernels.hpp"

namespace rsyn::kernels {

#ifndef RSYN_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(RSYN_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* pick_default() {
  const char* env = std::getenv("RSYN_KERNELS");
  if (env && std::string_view(env) == "scalar") return &scalar_table();
  if (cpu_has_avx2() && avx2_table()) return avx2_table();
  return &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* table = pick_default();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current() = &scalar_table();
    return true;
  }
  if (name == "avx2" && cpu_has_avx2() && avx2_table()) {
    current() = avx2_table();
    return true;
  }
  return false;
}

}  // namespace rsyn::kernels
