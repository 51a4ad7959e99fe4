#include <atomic>
#include <cstdlib>
#include <string_view>

#include "dualprop/simd/kernels.hpp"

namespace dualprop::simd {
namespace {

bool cpu_has_avx2() {
#if defined(DUALPROP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend detect() {
  if (const char* env = std::getenv("DUALPROP_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return Backend::kScalar;
    if (want == "avx2" && is_supported(Backend::kAvx2)) return Backend::kAvx2;
    if (want == "neon" && is_supported(Backend::kNeon)) return Backend::kNeon;
  }
  if (is_supported(Backend::kAvx2)) return Backend::kAvx2;
  if (is_supported(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

std::atomic<Backend>& active() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

bool is_supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return cpu_has_avx2();
    case Backend::kNeon:
#if defined(DUALPROP_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Backend backend) {
  switch (backend) {
#if defined(DUALPROP_HAVE_AVX2)
    case Backend::kAvx2:
      return detail::kAvx2Table;
#endif
#if defined(DUALPROP_HAVE_NEON)
    case Backend::kNeon:
      return detail::kNeonTable;
#endif
    default:
      return detail::kScalarTable;
  }
}

Backend active_backend() { return active().load(std::memory_order_relaxed); }

bool set_active_backend(Backend backend) {
  if (!is_supported(backend)) return false;
  active().store(backend, std::memory_order_relaxed);
  return true;
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "unknown";
}

}  // namespace dualprop::simd
