#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gpc/fft.hpp"
#include "gpc/kernels.hpp"
#include "gpc/matrix.hpp"

namespace gpc {

struct CgConfig {
  double rel_tolerance = 1e-6;
  /// 0 selects min(N, 1000).
  std::size_t max_iterations = 0;
  std::size_t probes = 16;
  std::size_t lanczos_steps = 50;

  std::size_t iteration_cap(std::size_t n) const noexcept;
  void validate() const;
};

/// Symmetric linear operator seen only through products.
class SymmetricOperator {
 public:
  virtual ~SymmetricOperator() = default;
  virtual std::size_t size() const noexcept = 0;
  virtual Vector apply(std::span<const double> v) const = 0;
  /// Row t of the result is apply(row t of vs). Overridden where rows can share work.
  virtual Matrix apply_rows(const Matrix& vs) const;
};

/// Adapts a plain callback.
class FunctionOperator final : public SymmetricOperator {
 public:
  using Fn = std::function<Vector(std::span<const double>)>;
  FunctionOperator(std::size_t n, Fn fn) : n_(n), fn_(std::move(fn)) {}
  std::size_t size() const noexcept override { return n_; }
  Vector apply(std::span<const double> v) const override;

 private:
  std::size_t n_;
  Fn fn_;
};

class DenseOperator final : public SymmetricOperator {
 public:
  explicit DenseOperator(const Matrix& a);
  std::size_t size() const noexcept override { return a_.rows(); }
  Vector apply(std::span<const double> v) const override;

 private:
  const Matrix& a_;
};

/// (K + σₙ²I)·v streamed in row slabs of `block` rows; the Gram matrix never exists whole.
class MatrixFreeOperator final : public SymmetricOperator {
 public:
  static constexpr std::size_t kDefaultBlock = 256;

  MatrixFreeOperator(KernelExpr kernel, const Matrix& x, double noise_variance, std::size_t block = kDefaultBlock);

  std::size_t size() const noexcept override { return x_.rows(); }
  std::size_t block() const noexcept { return block_; }
  Vector apply(std::span<const double> v) const override;
  Matrix apply_rows(const Matrix& vs) const override;

 private:
  KernelExpr kernel_;
  const Matrix& x_;
  double noise_;
  std::size_t block_;
  Vector x_sqnorms_;
};

Vector matrix_free_matvec(const KernelExpr& k, const Matrix& x, double noise_variance, std::span<const double> v,
                          std::size_t block = MatrixFreeOperator::kDefaultBlock);

struct CgResult {
  Vector x;
  std::size_t iterations = 0;
  /// ‖A·x − b‖₂ recomputed from x at exit.
  double final_residual = 0.0;
  bool converged = false;
};

/// Unpreconditioned conjugate gradients from x₀ = 0. Hitting the iteration cap
/// is reported through `converged`, not thrown.
CgResult cg_solve(const SymmetricOperator& op, std::span<const double> b, const CgConfig& cfg = {});
CgResult cg_solve(const FunctionOperator::Fn& apply, std::span<const double> b, const CgConfig& cfg = {});

/// Independent CG recurrences for each row of `bs`, advanced in lock step so
/// operators that override apply_rows can share one pass over their data.
/// Each result matches cg_solve on that right-hand side up to rounding.
std::vector<CgResult> cg_solve_rows(const SymmetricOperator& op, const Matrix& bs, const CgConfig& cfg = {});

struct TridiagonalEigen {
  std::vector<double> values;
  /// First component of each unit eigenvector.
  std::vector<double> first_components;
};

/// Implicit-shift QL on a symmetric tridiagonal matrix.
TridiagonalEigen tridiagonal_eigen(std::vector<double> diag, std::vector<double> offdiag);

/// Stochastic Lanczos quadrature estimate of log det(A) with Rademacher probes.
double slq_logdet(const SymmetricOperator& op, const CgConfig& cfg, std::uint64_t seed);

/// Rademacher vector for (seed, stream); the same pair always gives the same vector.
Vector rademacher(std::size_t n, std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Structured kernel interpolation on a 1-D grid.

using IndexVector = std::vector<std::size_t, TrackedAllocator<std::size_t>>;

/// Compressed-row interpolation weights with four entries per row.
struct InterpolationWeights {
  std::size_t rows = 0;
  std::size_t cols = 0;
  IndexVector row_offsets;
  IndexVector col_indices;
  Vector values;

  /// W·u (length rows)
  Vector apply(std::span<const double> u) const;
  /// Wᵀ·v (length cols)
  Vector apply_transposed(std::span<const double> v) const;
};

struct SkiState {
  double grid_lo = 0.0;
  double grid_hi = 0.0;
  std::size_t grid_size = 0;
  double spacing = 0.0;
  InterpolationWeights weights;
  Vector toeplitz_first_col;
  Circulant circulant;
  KernelExpr kernel;

  /// K_grid·u via the circulant embedding.
  Vector grid_matvec(std::span<const double> u) const;
  /// True when every stencil node of x lies on the grid.
  bool covers(double x) const noexcept;
  /// Interpolation rows for arbitrary points inside the covered range.
  InterpolationWeights interpolate(const Matrix& x) const;
};

/// Smallest power of two ≥ 2m − 1.
std::size_t circulant_embedding_size(std::size_t m) noexcept;

SkiState build_ski(const Matrix& x, const KernelExpr& k, std::size_t grid_size);

Vector ski_matvec(const SkiState& s, double noise_variance, std::span<const double> v);

class SkiOperator final : public SymmetricOperator {
 public:
  SkiOperator(const SkiState& state, double noise_variance) : state_(state), noise_(noise_variance) {}
  std::size_t size() const noexcept override { return state_.weights.rows; }
  Vector apply(std::span<const double> v) const override { return ski_matvec(state_, noise_, v); }

 private:
  const SkiState& state_;
  double noise_;
};

}  // namespace gpc
