#pragma once

#include <cstddef>

#include "gpc/simd.hpp"

namespace gpc::simd::detail {

// exp() results below this argument are subnormal; every variant returns 0.
inline constexpr double kExpUnderflow = -708.0;
inline constexpr double kExpOverflow = 709.78;

double dot_scalar(const double* a, const double* b, std::size_t n) noexcept;
void dot4x2_scalar(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride, std::size_t n,
                   double* out, std::size_t out_stride) noexcept;
double sqdist_scalar(const double* a, const double* b, std::size_t n) noexcept;
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) noexcept;
void exp_scalar(double* x, std::size_t n) noexcept;

#if defined(GPC_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n) noexcept;
void dot4x2_avx2(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride, std::size_t n,
                   double* out, std::size_t out_stride) noexcept;
double sqdist_avx2(const double* a, const double* b, std::size_t n) noexcept;
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) noexcept;
void exp_avx2(double* x, std::size_t n) noexcept;
#endif

#if defined(GPC_HAVE_NEON)
double dot_neon(const double* a, const double* b, std::size_t n) noexcept;
void dot4x2_neon(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride, std::size_t n,
                   double* out, std::size_t out_stride) noexcept;
double sqdist_neon(const double* a, const double* b, std::size_t n) noexcept;
void axpy_neon(double alpha, const double* x, double* y, std::size_t n) noexcept;
void exp_neon(double* x, std::size_t n) noexcept;
#endif

}  // namespace gpc::simd::detail
