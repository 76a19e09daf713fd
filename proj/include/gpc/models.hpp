#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gpc/kernels.hpp"
#include "gpc/linalg.hpp"
#include "gpc/matrix.hpp"
#include "gpc/solvers.hpp"

namespace gpc {

enum class Strategy { Cholesky, CG, SKI, Auto };

std::string_view to_string(Strategy s) noexcept;
/// "cholesky", "cg", "ski", "auto"; throws Error{InvalidArgument} otherwise.
Strategy parse_strategy(std::string_view text);

struct FitOptions {
  CgConfig cg;
  /// Row-slab height for the matrix-free operator used by the CG strategy.
  std::size_t matvec_block = 32;
  /// 0 selects max(128, next power of two ≥ 4√N), capped at 2¹⁵.
  std::size_t ski_grid_size = 0;
  /// Auto picks Cholesky up to this N, then SKI for 1-D inputs, else CG.
  std::size_t auto_cholesky_max_n = 4000;
  std::uint64_t slq_seed = 0;
  /// Test points solved together when computing CG/SKI variances.
  std::size_t variance_batch = 512;
};

std::size_t default_ski_grid_size(std::size_t n) noexcept;
Strategy resolve_strategy(Strategy requested, std::size_t n, std::size_t d, const FitOptions& options = {});

struct Prediction {
  Vector mean;
  /// Latent (noise-free) variance, clamped at 0. Add σₙ² for observation variance.
  Vector variance;
};

/// Exact GP posterior with one of three solver back ends. Immutable once built;
/// prediction does not refactor the training set.
class ExactState {
 public:
  const Matrix& x_train() const noexcept { return x_; }
  std::span<const double> y_train() const noexcept { return y_; }
  const KernelExpr& kernel() const noexcept { return kernel_; }
  double noise_variance() const noexcept { return noise_; }
  Strategy strategy() const noexcept { return strategy_; }
  std::span<const double> alpha() const noexcept { return alpha_; }
  const std::optional<CholeskyFactor>& factor() const noexcept { return factor_; }
  const std::optional<SkiState>& ski() const noexcept { return ski_; }
  const FitOptions& options() const noexcept { return options_; }
  std::size_t cg_iterations() const noexcept { return cg_iterations_; }
  double cg_residual() const noexcept { return cg_residual_; }

 private:
  friend ExactState gp_fit(const Matrix&, std::span<const double>, const KernelExpr&, double, Strategy,
                           const FitOptions&);
  ExactState(Matrix x, Vector y, KernelExpr kernel, double noise, Strategy strategy, FitOptions options)
      : x_(std::move(x)), y_(std::move(y)), kernel_(std::move(kernel)), noise_(noise), strategy_(strategy),
        options_(std::move(options)) {}

  Matrix x_;
  Vector y_;
  KernelExpr kernel_;
  double noise_;
  Strategy strategy_;
  FitOptions options_;
  Vector alpha_;
  std::optional<CholeskyFactor> factor_;
  std::optional<SkiState> ski_;
  std::size_t cg_iterations_ = 0;
  double cg_residual_ = 0.0;
};

ExactState gp_fit(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                  Strategy strategy, const FitOptions& options = {});

Prediction gp_predict(const ExactState& s, const Matrix& x_test);
/// Posterior mean only; skips the variance solves.
Vector gp_predict_mean(const ExactState& s, const Matrix& x_test);

/// −½[yᵀK_y⁻¹y + log|K_y| + N log 2π]; the log-determinant is exact for the
/// Cholesky strategy and a seeded SLQ estimate otherwise.
double log_marginal_likelihood(const ExactState& s);

// ---------------------------------------------------------------------------
// Sparse variational (VFE) regression

struct VfeTerms {
  /// log N(y | 0, Q + σₙ²I) − tr(K − Q)/(2σₙ²)
  double value = 0.0;
  /// tr(K − Q), nonnegative up to rounding.
  double trace_penalty = 0.0;
};

VfeTerms vfe_objective(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                       const Matrix& z);

struct OptimizerConfig {
  std::size_t steps = 0;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Central-difference step in log-parameter space.
  double fd_epsilon = 1e-4;

  void validate() const;
};

struct OptimizeResult {
  ParamVector best;
  double best_value = 0.0;
  /// Objective at the iterate of each completed step.
  std::vector<double> trace;
  std::size_t evaluations = 0;
  std::size_t steps_taken = 0;
  bool aborted = false;
};

/// Adam ascent on a black-box objective with central finite-difference
/// gradients: 2P + 1 evaluations per step. Returns the best iterate seen.
OptimizeResult optimize_hyperparams(const std::function<double(const ParamVector&)>& objective, ParamVector p0,
                                    const OptimizerConfig& opt);

/// Greedy max-min selection starting at row 0; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sampling(const Matrix& x, std::size_t m);
/// Number of farthest_point_sampling calls made by this process.
std::size_t fps_invocation_count() noexcept;

class SparseState {
 public:
  const Matrix& inducing() const noexcept { return z_; }
  const KernelExpr& kernel() const noexcept { return kernel_; }
  double noise_variance() const noexcept { return noise_; }
  double elbo() const noexcept { return elbo_; }
  const CholeskyFactor& kuu_factor() const noexcept { return kuu_; }
  /// Lower factor of Σ_M = K_uu + σₙ⁻²K_uf K_fu.
  const CholeskyFactor& sigma_factor() const noexcept { return sigma_; }
  std::span<const double> weights() const noexcept { return weights_; }
  const OptimizeResult& optimization() const noexcept { return optimization_; }

 private:
  friend SparseState sparse_fit(const Matrix&, std::span<const double>, const KernelExpr&, double, std::size_t,
                                const OptimizerConfig&, const SparseState*);
  friend SparseState sparse_fit_fixed(const Matrix&, std::span<const double>, const KernelExpr&, double, Matrix);
  SparseState() = default;

  Matrix z_;
  KernelExpr kernel_ = KernelExpr::rbf(1.0);
  double noise_ = 1.0;
  double elbo_ = 0.0;
  CholeskyFactor kuu_;
  CholeskyFactor whitened_;  // factor of I + σₙ⁻²·A·Aᵀ, A = L_uu⁻¹K_uf
  CholeskyFactor sigma_;
  Vector weights_;
  OptimizeResult optimization_;

  friend Prediction sparse_predict(const SparseState&, const Matrix&);
};

/// Cold fit picks inducing inputs by farthest-point sampling; a warm fit reuses
/// warm->inducing() as is. Kernel and noise are tuned by Adam on the VFE bound
/// (inducing inputs stay fixed).
SparseState sparse_fit(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                       std::size_t m, const OptimizerConfig& opt, const SparseState* warm = nullptr);

/// Caches the posterior for given inducing inputs and hyperparameters, no optimization.
SparseState sparse_fit_fixed(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                             Matrix z);

Prediction sparse_predict(const SparseState& s, const Matrix& x_test);

// ---------------------------------------------------------------------------

struct ExactFitResult {
  KernelExpr kernel;
  double noise_variance;
  OptimizeResult optimization;
};

/// Adam on the exact (Cholesky) log marginal likelihood over kernel + noise.
ExactFitResult optimize_exact(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                              const OptimizerConfig& opt);

struct Metrics {
  double rmse = 0.0;
  double nll = 0.0;
  double coverage95 = 0.0;
};

Metrics metrics(std::span<const double> mean, std::span<const double> var_latent, double noise_variance,
                std::span<const double> y_true);

}  // namespace gpc
