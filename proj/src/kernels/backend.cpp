#include "camloc/kernels.hpp"

#include <stdexcept>

namespace camloc::kernels {

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

#if !(defined(__x86_64__) || defined(_M_X64))
const Backend& avx2_backend() {
  throw std::logic_error("avx2 backend not built on this architecture");
}
#endif

const Backend& select_backend(const std::string& preference) {
  if (preference == "scalar") return scalar_backend();
  if (preference == "avx2") {
    if (!avx2_supported())
      throw std::invalid_argument("backend 'avx2' requested but the CPU does not support AVX2");
    return avx2_backend();
  }
  if (preference == "auto" || preference.empty()) {
    return avx2_supported() ? avx2_backend() : scalar_backend();
  }
  throw std::invalid_argument("unknown kernel backend '" + preference +
                              "' (expected auto, scalar or avx2)");
}

}  // namespace camloc::kernels
