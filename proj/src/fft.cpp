#include "gpc/fft.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

namespace gpc {

bool is_power_of_two(std::size_t n) noexcept { return std::has_single_bit(n); }

std::size_t next_power_of_two(std::size_t n) noexcept { return n <= 1 ? 1 : std::bit_ceil(n); }

void fft_inplace(std::span<std::complex<double>> data, bool inverse) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) fail(ErrorKind::NotPowerOfTwo, "fft: length must be a power of two");
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }

  // Twiddles evaluated directly rather than by recurrence to keep the error at O(eps log n).
  const double sign = inverse ? 1.0 : -1.0;
  ComplexVector twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = {std::cos(angle), std::sin(angle)};
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<double> u = data[start + k];
        const std::complex<double> v = data[start + k + half] * twiddle[k * stride];
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& z : data) z *= inv;
  }
}

Circulant::Circulant(std::span<const double> first_col) : spectrum_(first_col.begin(), first_col.end()) {
  if (!is_power_of_two(first_col.size())) fail(ErrorKind::NotPowerOfTwo, "circulant: length must be a power of two");
  for (double c : first_col) first_col_l1_ += std::abs(c);
  fft_inplace(spectrum_, false);
}

Vector Circulant::apply(std::span<const double> v) const {
  const std::size_t n = size();
  require(v.size() <= n, ErrorKind::DimensionMismatch, "circulant: vector longer than operator");
  ComplexVector work(n);
  std::copy(v.begin(), v.end(), work.begin());
  double v_max = 0.0;
  for (double x : v) v_max = std::max(v_max, std::abs(x));

  fft_inplace(work, false);
  for (std::size_t k = 0; k < n; ++k) work[k] *= spectrum_[k];
  fft_inplace(work, true);

  Vector out(n);
  double re_max = 0.0;
  double im_max = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = work[k].real();
    re_max = std::max(re_max, std::abs(work[k].real()));
    im_max = std::max(im_max, std::abs(work[k].imag()));
  }
  // Real inputs leave only rounding noise in the imaginary part. The second
  // term covers results that cancel to ~0, where noise is set by the inputs.
  const double eps = std::numeric_limits<double>::epsilon();
  const double floor = 64.0 * eps * std::log2(static_cast<double>(n) + 1.0) * first_col_l1_ * v_max;
  if (!(im_max <= 1e-8 * re_max + floor))
    fail(ErrorKind::NonFinite, "circulant: imaginary residue exceeds tolerance");
  return out;
}

Vector fft_circulant_matvec(std::span<const double> first_col, std::span<const double> v) {
  require(first_col.size() == v.size(), ErrorKind::DimensionMismatch, "circulant matvec: length mismatch");
  return Circulant(first_col).apply(v);
}

}  // namespace gpc
