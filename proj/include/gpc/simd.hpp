#pragma once

// Inner-loop kernels with a scalar reference and ISA-specific variants.
// The active table is picked once at startup from CPU features and can be
// overridden with GPC_SIMD=scalar|avx2|neon or set_backend().

#include <cstddef>
#include <string_view>
#include <vector>

namespace gpc::simd {

enum class Backend { Scalar, Avx2, Neon };

std::string_view to_string(Backend b) noexcept;

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n) noexcept;
  /// out[j*out_stride + r] = dot(a + r*a_stride, b + j*b_stride, n) for r < 4, j < 2.
  void (*dot4x2)(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride, std::size_t n,
                 double* out, std::size_t out_stride) noexcept;
  double (*sqdist)(const double* a, const double* b, std::size_t n) noexcept;
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n) noexcept;
  /// x[i] = exp(x[i]); inputs below -708 flush to 0.
  void (*exp_inplace)(double* x, std::size_t n) noexcept;
};

const KernelTable& scalar_table() noexcept;
/// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;

const KernelTable& active() noexcept;
Backend active_backend() noexcept;
/// Returns false (and leaves the selection unchanged) if the backend is unavailable.
bool set_backend(Backend b) noexcept;
std::vector<Backend> available_backends();

inline double dot(const double* a, const double* b, std::size_t n) noexcept { return active().dot(a, b, n); }
inline void dot4x2(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride, std::size_t n,
                   double* out, std::size_t out_stride) noexcept {
  active().dot4x2(a, a_stride, b, b_stride, n, out, out_stride);
}
inline double sqdist(const double* a, const double* b, std::size_t n) noexcept {
  return active().sqdist(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  active().axpy(alpha, x, y, n);
}
inline void exp_inplace(double* x, std::size_t n) noexcept { active().exp_inplace(x, n); }

}  // namespace gpc::simd
