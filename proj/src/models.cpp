#include "gpc/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gpc/simd.hpp"

namespace gpc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2π)
// gp_fit rejects iterative solutions whose residual exceeds this fraction of ‖y‖.
constexpr double kAlphaResidualBound = 1e-5;
constexpr std::size_t kPredictChunk = 256;

void check_training_inputs(const Matrix& x, std::span<const double> y, double noise_variance) {
  require(x.rows() >= 1, ErrorKind::InvalidArgument, "fit: need at least one training point");
  require(y.size() == x.rows(), ErrorKind::DimensionMismatch, "fit: y length must equal X rows");
  require(std::isfinite(noise_variance) && noise_variance > 0.0, ErrorKind::InvalidArgument,
          "fit: noise variance must be positive");
  require(all_finite(x.values()) && all_finite(y), ErrorKind::NonFinite, "fit: non-finite training data");
}

void check_iterative(const CgResult& r, std::span<const double> y, const char* what) {
  const double bound = kAlphaResidualBound * norm2(y);
  if (r.final_residual > bound)
    fail(ErrorKind::NotConverged, std::string(what) + ": CG stopped after " + std::to_string(r.iterations) +
                                      " iterations with residual " + std::to_string(r.final_residual) +
                                      " (bound " + std::to_string(bound) + ")");
}

Vector rows_dot(const Matrix& m, std::span<const double> v) {
  Vector out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = simd::dot(m.row(i).data(), v.data(), v.size());
  return out;
}

}  // namespace

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::Cholesky: return "cholesky";
    case Strategy::CG: return "cg";
    case Strategy::SKI: return "ski";
    case Strategy::Auto: return "auto";
  }
  return "?";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "cholesky") return Strategy::Cholesky;
  if (text == "cg") return Strategy::CG;
  if (text == "ski") return Strategy::SKI;
  if (text == "auto") return Strategy::Auto;
  fail(ErrorKind::InvalidArgument, "unknown strategy '" + std::string(text) + "'");
}

std::size_t default_ski_grid_size(std::size_t n) noexcept {
  const auto target = static_cast<std::size_t>(std::ceil(4.0 * std::sqrt(static_cast<double>(n))));
  return std::min<std::size_t>(std::max<std::size_t>(128, next_power_of_two(target)), std::size_t{1} << 15);
}

Strategy resolve_strategy(Strategy requested, std::size_t n, std::size_t d, const FitOptions& options) {
  if (requested != Strategy::Auto) return requested;
  if (n <= options.auto_cholesky_max_n) return Strategy::Cholesky;
  return d == 1 ? Strategy::SKI : Strategy::CG;
}

ExactState gp_fit(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                  Strategy strategy, const FitOptions& options) {
  check_training_inputs(x, y, noise_variance);
  const Strategy resolved = resolve_strategy(strategy, x.rows(), x.cols(), options);
  if (resolved == Strategy::SKI) require(x.cols() == 1, ErrorKind::Unsupported, "fit: SKI requires D = 1");

  ExactState s(x, to_vector(y), k, noise_variance, resolved, options);
  switch (resolved) {
    case Strategy::Cholesky: {
      CholeskyFactor f = [&] {
        Matrix gram = kernel_eval(k, s.x_, s.x_);
        for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) += noise_variance;
        return cholesky(gram);
      }();
      s.alpha_ = cholesky_solve(f, s.y_);
      s.factor_ = std::move(f);
      break;
    }
    case Strategy::CG: {
      const MatrixFreeOperator op(k, s.x_, noise_variance, options.matvec_block);
      CgResult r = cg_solve(op, s.y_, options.cg);
      check_iterative(r, s.y_, "fit");
      s.cg_iterations_ = r.iterations;
      s.cg_residual_ = r.final_residual;
      s.alpha_ = std::move(r.x);
      break;
    }
    case Strategy::SKI: {
      const std::size_t m = options.ski_grid_size ? options.ski_grid_size : default_ski_grid_size(x.rows());
      s.ski_ = build_ski(s.x_, k, m);
      const SkiOperator op(*s.ski_, noise_variance);
      CgResult r = cg_solve(op, s.y_, options.cg);
      check_iterative(r, s.y_, "fit");
      s.cg_iterations_ = r.iterations;
      s.cg_residual_ = r.final_residual;
      s.alpha_ = std::move(r.x);
      break;
    }
    case Strategy::Auto:
      break;
  }
  return s;
}

namespace {

void predict_cholesky(const ExactState& s, const Matrix& xt, std::size_t offset, Prediction& out) {
  const Matrix kst = kernel_eval(s.kernel(), xt, s.x_train());
  const Vector kss = kernel_diag(s.kernel(), xt);
  const Vector mean = rows_dot(kst, s.alpha());
  const Matrix v = trisolve(*s.factor(), kst.transposed(), Triangle::Lower);
  for (std::size_t t = 0; t < xt.rows(); ++t) {
    double q = 0.0;
    for (std::size_t i = 0; i < v.rows(); ++i) q += v(i, t) * v(i, t);
    out.mean[offset + t] = mean[t];
    out.variance[offset + t] = std::max(0.0, kss[t] - q);
  }
}

void predict_cg(const ExactState& s, const Matrix& xt, std::size_t offset, Prediction& out) {
  const Matrix kst = kernel_eval(s.kernel(), xt, s.x_train());
  const Vector kss = kernel_diag(s.kernel(), xt);
  const Vector mean = rows_dot(kst, s.alpha());
  const MatrixFreeOperator op(s.kernel(), s.x_train(), s.noise_variance(), s.options().matvec_block);
  const auto solves = cg_solve_rows(op, kst, s.options().cg);
  for (std::size_t t = 0; t < xt.rows(); ++t) {
    const double q = simd::dot(kst.row(t).data(), solves[t].x.data(), kst.cols());
    out.mean[offset + t] = mean[t];
    out.variance[offset + t] = std::max(0.0, kss[t] - q);
  }
}

// Interpolated cross-covariances for test points on the grid; exact kernel
// values for points the stencil cannot reach.
void predict_ski(const ExactState& s, const Matrix& xt, std::size_t offset, Prediction& out) {
  const SkiState& ski = *s.ski();
  const auto& w = ski.weights;
  const Vector grid_alpha = ski.grid_matvec(w.apply_transposed(s.alpha()));
  const std::size_t n = s.x_train().rows();

  Matrix kst(xt.rows(), n);
  Vector kss(xt.rows());
  for (std::size_t t = 0; t < xt.rows(); ++t) {
    const Matrix pt = xt.row_range(t, t + 1);
    if (ski.covers(pt(0, 0))) {
      const InterpolationWeights wt = ski.interpolate(pt);
      Vector e(ski.grid_size, 0.0);
      double m = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        e[wt.col_indices[k]] += wt.values[k];
        m += wt.values[k] * grid_alpha[wt.col_indices[k]];
      }
      const Vector ke = ski.grid_matvec(e);
      const Vector row = w.apply(ke);
      std::copy(row.begin(), row.end(), kst.row(t).data());
      kss[t] = simd::dot(e.data(), ke.data(), e.size());
      out.mean[offset + t] = m;
    } else {
      const Matrix row = kernel_eval(s.kernel(), pt, s.x_train());
      std::copy(row.values().begin(), row.values().end(), kst.row(t).data());
      kss[t] = kernel_diag(s.kernel(), pt)[0];
      out.mean[offset + t] = simd::dot(row.data(), s.alpha().data(), n);
    }
  }
  const SkiOperator op(ski, s.noise_variance());
  const auto solves = cg_solve_rows(op, kst, s.options().cg);
  for (std::size_t t = 0; t < xt.rows(); ++t) {
    const double q = simd::dot(kst.row(t).data(), solves[t].x.data(), n);
    out.variance[offset + t] = std::max(0.0, kss[t] - q);
  }
}

}  // namespace

Prediction gp_predict(const ExactState& s, const Matrix& x_test) {
  require(x_test.cols() == s.x_train().cols(), ErrorKind::DimensionMismatch, "predict: feature dimension mismatch");
  require(all_finite(x_test.values()), ErrorKind::NonFinite, "predict: non-finite test input");
  const std::size_t t_count = x_test.rows();
  Prediction out{Vector(t_count), Vector(t_count)};
  const std::size_t chunk =
      s.strategy() == Strategy::Cholesky ? kPredictChunk : std::max<std::size_t>(1, s.options().variance_batch);
  for (std::size_t b0 = 0; b0 < t_count; b0 += chunk) {
    const std::size_t b1 = std::min(t_count, b0 + chunk);
    const Matrix xt = x_test.row_range(b0, b1);
    switch (s.strategy()) {
      case Strategy::Cholesky: predict_cholesky(s, xt, b0, out); break;
      case Strategy::CG: predict_cg(s, xt, b0, out); break;
      case Strategy::SKI: predict_ski(s, xt, b0, out); break;
      case Strategy::Auto: break;
    }
  }
  return out;
}

Vector gp_predict_mean(const ExactState& s, const Matrix& x_test) {
  require(x_test.cols() == s.x_train().cols(), ErrorKind::DimensionMismatch, "predict: feature dimension mismatch");
  require(all_finite(x_test.values()), ErrorKind::NonFinite, "predict: non-finite test input");
  const std::size_t t_count = x_test.rows();
  Vector mean(t_count);
  if (s.strategy() != Strategy::SKI) {
    for (std::size_t b0 = 0; b0 < t_count; b0 += kPredictChunk) {
      const std::size_t b1 = std::min(t_count, b0 + kPredictChunk);
      const Vector m = rows_dot(kernel_eval(s.kernel(), x_test.row_range(b0, b1), s.x_train()), s.alpha());
      std::copy(m.begin(), m.end(), mean.begin() + static_cast<std::ptrdiff_t>(b0));
    }
    return mean;
  }
  const SkiState& ski = *s.ski();
  const Vector grid_alpha = ski.grid_matvec(ski.weights.apply_transposed(s.alpha()));
  for (std::size_t t = 0; t < t_count; ++t) {
    const Matrix pt = x_test.row_range(t, t + 1);
    if (ski.covers(pt(0, 0))) {
      const InterpolationWeights wt = ski.interpolate(pt);
      double m = 0.0;
      for (std::size_t k = 0; k < 4; ++k) m += wt.values[k] * grid_alpha[wt.col_indices[k]];
      mean[t] = m;
    } else {
      const Matrix row = kernel_eval(s.kernel(), pt, s.x_train());
      mean[t] = simd::dot(row.data(), s.alpha().data(), s.x_train().rows());
    }
  }
  return mean;
}

double log_marginal_likelihood(const ExactState& s) {
  const std::size_t n = s.x_train().rows();
  const double quad = simd::dot(s.y_train().data(), s.alpha().data(), n);
  double logdet = 0.0;
  switch (s.strategy()) {
    case Strategy::Cholesky:
      logdet = logdet_from_chol(*s.factor());
      break;
    case Strategy::CG: {
      const MatrixFreeOperator op(s.kernel(), s.x_train(), s.noise_variance(), s.options().matvec_block);
      logdet = slq_logdet(op, s.options().cg, s.options().slq_seed);
      break;
    }
    case Strategy::SKI: {
      const SkiOperator op(*s.ski(), s.noise_variance());
      logdet = slq_logdet(op, s.options().cg, s.options().slq_seed);
      break;
    }
    case Strategy::Auto:
      break;
  }
  return -0.5 * (quad + logdet + static_cast<double>(n) * kLog2Pi);
}

ExactFitResult optimize_exact(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                              const OptimizerConfig& opt) {
  check_training_inputs(x, y, noise_variance);
  auto objective = [&](const ParamVector& p) {
    try {
      const auto [kernel, noise] = unflatten_model_params(k, p);
      return log_marginal_likelihood(gp_fit(x, y, kernel, noise, Strategy::Cholesky));
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  OptimizeResult r = optimize_hyperparams(objective, flatten_model_params(k, noise_variance), opt);
  auto [kernel, noise] = unflatten_model_params(k, r.best);
  return {std::move(kernel), noise, std::move(r)};
}

Metrics metrics(std::span<const double> mean, std::span<const double> var_latent, double noise_variance,
                std::span<const double> y_true) {
  require(mean.size() == y_true.size() && var_latent.size() == y_true.size(), ErrorKind::DimensionMismatch,
          "metrics: length mismatch");
  require(!y_true.empty(), ErrorKind::InvalidArgument, "metrics: no points");
  double se = 0.0;
  double nll = 0.0;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    require(var_latent[i] >= 0.0, ErrorKind::InvalidArgument, "metrics: negative variance");
    const double r = y_true[i] - mean[i];
    const double v = var_latent[i] + noise_variance;
    se += r * r;
    nll += 0.5 * std::log(2.0 * std::numbers::pi * v) + r * r / (2.0 * v);
    if (std::abs(r) <= 1.96 * std::sqrt(v)) ++inside;
  }
  const auto n = static_cast<double>(y_true.size());
  return {std::sqrt(se / n), nll / n, static_cast<double>(inside) / n};
}

}  // namespace gpc
