#pragma once

#include <span>

#include "gpc/matrix.hpp"

namespace gpc {

/// op(A)·op(B). Each output entry is one contiguous dot product in a fixed
/// order, so results are bit-identical across calls and transpose flags.
Matrix matmul(const Matrix& a, const Matrix& b, bool transpose_a = false, bool transpose_b = false);

/// y = A·x
Vector matvec(const Matrix& a, std::span<const double> x);

struct CholeskyFactor {
  Matrix lower;               // strictly-upper entries are zero
  double jitter_used = 0.0;   // added to the diagonal before factorization

  std::size_t order() const noexcept { return lower.rows(); }
};

/// Factors A + jitter·I. Tries jitter 0 first, then 1e-10·mean(diag A)
/// escalating by 10x at most three times before giving up.
CholeskyFactor cholesky(const Matrix& a);

enum class Triangle { Lower, UpperTransposed };

/// Solves L·X = B (Lower) or Lᵀ·X = B (UpperTransposed).
Matrix trisolve(const CholeskyFactor& factor, const Matrix& b, Triangle mode);
Vector trisolve(const CholeskyFactor& factor, std::span<const double> b, Triangle mode);

/// (L·Lᵀ)⁻¹·b via two triangular solves.
Vector cholesky_solve(const CholeskyFactor& factor, std::span<const double> b);

/// 2·Σ log Lᵢᵢ
double logdet_from_chol(const CholeskyFactor& factor) noexcept;

/// ‖xᵢ‖² + ‖yⱼ‖² − 2·xᵢ·yⱼ through one matmul plus norm corrections, clamped at 0.
Matrix pairwise_sqdist(const Matrix& x, const Matrix& y);

/// Same, with precomputed squared row norms of y (length y.rows()).
Matrix pairwise_sqdist(const Matrix& x, const Matrix& y, std::span<const double> y_sqnorms);

Vector row_sqnorms(const Matrix& x);

}  // namespace gpc
