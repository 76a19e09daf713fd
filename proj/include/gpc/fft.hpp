#pragma once

#include <complex>
#include <span>
#include <vector>

#include "gpc/ledger.hpp"
#include "gpc/matrix.hpp"

namespace gpc {

using ComplexVector = std::vector<std::complex<double>, TrackedAllocator<std::complex<double>>>;

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

/// In-place iterative radix-2 FFT. Inverse includes the 1/n normalization.
void fft_inplace(std::span<std::complex<double>> data, bool inverse);

/// circulant(first_col)·v via FFT; first_col and v share a power-of-two length.
Vector fft_circulant_matvec(std::span<const double> first_col, std::span<const double> v);

/// Circulant operator with its spectrum computed once.
class Circulant {
 public:
  explicit Circulant(std::span<const double> first_col);

  std::size_t size() const noexcept { return spectrum_.size(); }
  const ComplexVector& spectrum() const noexcept { return spectrum_; }

  /// v shorter than size() is zero-padded; the result has size() entries.
  Vector apply(std::span<const double> v) const;

 private:
  ComplexVector spectrum_;
  double first_col_l1_ = 0.0;
};

}  // namespace gpc
