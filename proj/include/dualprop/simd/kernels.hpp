#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops shared by convolution, deformable convolution,
// attention and the image metrics. Each backend provides the same entry
// points; the active one is picked once at startup from the CPU features
// (override with DUALPROP_SIMD=scalar|avx2|neon).
//
// axpy is bitwise identical across backends (no fused multiply-add, no
// reassociation). dot and sum_sq_diff reduce in a backend-specific but fixed
// order, so they are deterministic per backend and agree across backends to
// rounding.

namespace dualprop::simd {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);
};

const KernelTable& table(Backend backend);
bool is_supported(Backend backend);

Backend active_backend();
// Returns false (and leaves the active backend alone) if unsupported.
bool set_active_backend(Backend backend);

std::string_view backend_name(Backend backend);

inline double dot(const double* a, const double* b, std::size_t n) {
  return table(active_backend()).dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table(active_backend()).axpy(alpha, x, y, n);
}
inline double sum_sq_diff(const double* a, const double* b, std::size_t n) {
  return table(active_backend()).sum_sq_diff(a, b, n);
}

namespace detail {
extern const KernelTable kScalarTable;
#if defined(DUALPROP_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(DUALPROP_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif
}  // namespace detail

}  // namespace dualprop::simd
