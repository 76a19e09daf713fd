#include <cmath>

#include "simd_internal.hpp"

namespace gpc::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void dot4x2_scalar(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride, std::size_t n,
                   double* out, std::size_t out_stride) noexcept {
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t r = 0; r < 4; ++r) out[j * out_stride + r] = dot_scalar(a + r * a_stride, b + j * b_stride, n);
}

double sqdist_scalar(const double* a, const double* b, std::size_t n) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void exp_scalar(double* x, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] < kExpUnderflow ? 0.0 : std::exp(x[i]);
}

}  // namespace gpc::simd::detail
