// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "simd_internal.hpp"

namespace gpc::simd::detail {

namespace {

inline double hsum(__m256d v) noexcept {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// exp on four lanes: Cody-Waite reduction by ln 2, degree-13 Taylor on |r| <= ln2/2,
// then scale by 2^n through the exponent bits.
__attribute__((always_inline)) inline __m256d exp4(__m256d x) noexcept {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);

  const __m256d under = _mm256_cmp_pd(x, _mm256_set1_pd(kExpUnderflow), _CMP_LT_OQ);
  const __m256d over = _mm256_cmp_pd(x, _mm256_set1_pd(kExpOverflow), _CMP_GT_OQ);
  const __m256d nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  const __m256d xc = _mm256_max_pd(_mm256_min_pd(x, _mm256_set1_pd(709.0)), _mm256_set1_pd(kExpUnderflow));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, xc);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double kInvFact[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
      1.0 / 40320.0,      1.0 / 5040.0,      1.0 / 720.0,      1.0 / 120.0,     1.0 / 24.0,
      1.0 / 6.0,          0.5,               1.0,              1.0};
  __m256d p = _mm256_set1_pd(kInvFact[0]);
  for (int k = 1; k < 14; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[k]));

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(n32);
  bits = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
  __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));

  result = _mm256_blendv_pd(result, _mm256_setzero_pd(), under);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(HUGE_VAL), over);
  return _mm256_blendv_pd(result, x, nan);
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) noexcept {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void dot4x2_avx2(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride, std::size_t n,
                 double* out, std::size_t out_stride) noexcept {
  const double* ar[4] = {a, a + a_stride, a + 2 * a_stride, a + 3 * a_stride};
  const double* b0 = b;
  const double* b1 = b + b_stride;
  __m256d acc0[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd()};
  __m256d acc1[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd()};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v0 = _mm256_loadu_pd(b0 + i);
    const __m256d v1 = _mm256_loadu_pd(b1 + i);
    for (int r = 0; r < 4; ++r) {
      const __m256d av = _mm256_loadu_pd(ar[r] + i);
      acc0[r] = _mm256_fmadd_pd(av, v0, acc0[r]);
      acc1[r] = _mm256_fmadd_pd(av, v1, acc1[r]);
    }
  }
  for (int r = 0; r < 4; ++r) {
    double s0 = hsum(acc0[r]);
    double s1 = hsum(acc1[r]);
    for (std::size_t k = i; k < n; ++k) {
      s0 += ar[r][k] * b0[k];
      s1 += ar[r][k] * b1[k];
    }
    out[r] = s0;
    out[out_stride + r] = s1;
  }
}

double sqdist_avx2(const double* a, const double* b, std::size_t n) noexcept {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void exp_avx2(double* x, std::size_t n) noexcept {
  std::size_t i = 0;
  // Four independent chains per iteration hide the FMA latency of the polynomial.
  for (; i + 16 <= n; i += 16) {
    const __m256d a = exp4(_mm256_loadu_pd(x + i));
    const __m256d b = exp4(_mm256_loadu_pd(x + i + 4));
    const __m256d c = exp4(_mm256_loadu_pd(x + i + 8));
    const __m256d d = exp4(_mm256_loadu_pd(x + i + 12));
    _mm256_storeu_pd(x + i, a);
    _mm256_storeu_pd(x + i + 4, b);
    _mm256_storeu_pd(x + i + 8, c);
    _mm256_storeu_pd(x + i + 12, d);
  }
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, exp4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    // Tail goes through the same vector path so a value never depends on its position.
    alignas(32) double tmp[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = 0; i + k < n; ++k) tmp[k] = x[i + k];
    _mm256_store_pd(tmp, exp4(_mm256_load_pd(tmp)));
    for (std::size_t k = 0; i + k < n; ++k) x[i + k] = tmp[k];
  }
}

}  // namespace gpc::simd::detail
