#include <arm_neon.h>

#include <cmath>

#include "simd_internal.hpp"

namespace gpc::simd::detail {

namespace {

inline float64x2_t exp2x(float64x2_t x) noexcept {
  const float64x2_t xc = vmaxq_f64(vminq_f64(x, vdupq_n_f64(709.0)), vdupq_n_f64(kExpUnderflow));
  const float64x2_t n = vrndnq_f64(vmulq_f64(xc, vdupq_n_f64(1.4426950408889634074)));
  float64x2_t r = vfmsq_f64(xc, n, vdupq_n_f64(6.93145751953125e-1));
  r = vfmsq_f64(r, n, vdupq_n_f64(1.42860682030941723212e-6));

  static constexpr double kInvFact[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
      1.0 / 40320.0,      1.0 / 5040.0,      1.0 / 720.0,      1.0 / 120.0,     1.0 / 24.0,
      1.0 / 6.0,          0.5,               1.0,              1.0};
  float64x2_t p = vdupq_n_f64(kInvFact[0]);
  for (int k = 1; k < 14; ++k) p = vfmaq_f64(vdupq_n_f64(kInvFact[k]), p, r);

  const int64x2_t bits = vshlq_n_s64(vaddq_s64(vcvtq_s64_f64(n), vdupq_n_s64(1023)), 52);
  float64x2_t result = vmulq_f64(p, vreinterpretq_f64_s64(bits));

  result = vbslq_f64(vcltq_f64(x, vdupq_n_f64(kExpUnderflow)), vdupq_n_f64(0.0), result);
  result = vbslq_f64(vcgtq_f64(x, vdupq_n_f64(kExpOverflow)), vdupq_n_f64(HUGE_VAL), result);
  return vbslq_f64(vceqq_f64(x, x), result, x);
}

}  // namespace

double dot_neon(const double* a, const double* b, std::size_t n) noexcept {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void dot4x2_neon(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride, std::size_t n,
                 double* out, std::size_t out_stride) noexcept {
  float64x2_t acc[2][4];
  for (auto& row : acc)
    for (auto& v : row) v = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v0 = vld1q_f64(b + i);
    const float64x2_t v1 = vld1q_f64(b + b_stride + i);
    for (std::size_t r = 0; r < 4; ++r) {
      const float64x2_t av = vld1q_f64(a + r * a_stride + i);
      acc[0][r] = vfmaq_f64(acc[0][r], av, v0);
      acc[1][r] = vfmaq_f64(acc[1][r], av, v1);
    }
  }
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t r = 0; r < 4; ++r) {
      double s = vaddvq_f64(acc[j][r]);
      for (std::size_t k = i; k < n; ++k) s += a[r * a_stride + k] * b[j * b_stride + k];
      out[j * out_stride + r] = s;
    }
}

double sqdist_neon(const double* a, const double* b, std::size_t n) noexcept {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, d, d);
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void exp_neon(double* x, std::size_t n) noexcept {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, exp2x(vld1q_f64(x + i)));
  if (i < n) {
    double tmp[2] = {x[i], 0.0};
    vst1q_f64(tmp, exp2x(vld1q_f64(tmp)));
    x[i] = tmp[0];
  }
}

}  // namespace gpc::simd::detail
