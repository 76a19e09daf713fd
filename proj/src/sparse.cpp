#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "gpc/models.hpp"
#include "gpc/simd.hpp"

namespace gpc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::atomic<std::size_t> g_fps_calls{0};

// Shared pieces of the collapsed VFE bound. With L = chol(K_uu) and
// A = L⁻¹K_uf, Q = AᵀA and Σ_M = L·B·Lᵀ where B = I + AAᵀ/σ².
struct VfeCore {
  CholeskyFactor luu;
  CholeskyFactor lb;
  Vector c;  // L_B⁻¹·A·y
  VfeTerms terms;
};

VfeCore vfe_core(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise, const Matrix& z) {
  require(z.cols() == x.cols(), ErrorKind::DimensionMismatch, "vfe: inducing dimension mismatch");
  require(z.rows() >= 1 && z.rows() <= x.rows(), ErrorKind::InvalidArgument, "vfe: need 1 <= M <= N");
  require(y.size() == x.rows(), ErrorKind::DimensionMismatch, "vfe: y length must equal X rows");
  require(std::isfinite(noise) && noise > 0.0, ErrorKind::InvalidArgument, "vfe: noise variance must be positive");
  require(all_finite(z.values()), ErrorKind::NonFinite, "vfe: non-finite inducing inputs");

  const std::size_t n = x.rows();
  const std::size_t m = z.rows();
  VfeCore core;
  core.luu = cholesky(kernel_eval(k, z, z));
  const Matrix a = trisolve(core.luu, kernel_eval(k, z, x), Triangle::Lower);

  Matrix b = matmul(a, a, false, true);
  for (double& v : b.values()) v /= noise;
  for (std::size_t i = 0; i < m; ++i) b(i, i) += 1.0;
  core.lb = cholesky(b);

  const Vector ay = matvec(a, y);
  core.c = trisolve(core.lb, ay, Triangle::Lower);

  const double yy = simd::dot(y.data(), y.data(), n);
  const double cc = simd::dot(core.c.data(), core.c.data(), m);
  const double quad = (yy - cc / noise) / noise;
  const double logdet = static_cast<double>(n) * std::log(noise) + logdet_from_chol(core.lb);

  const Vector kdiag = kernel_diag(k, x);
  double trace = 0.0;
  for (double d : kdiag) trace += d;
  trace -= simd::dot(a.data(), a.data(), a.size());

  core.terms.trace_penalty = trace;
  core.terms.value = -0.5 * (quad + logdet + static_cast<double>(n) * kLog2Pi) - trace / (2.0 * noise);
  return core;
}

}  // namespace

VfeTerms vfe_objective(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                       const Matrix& z) {
  return vfe_core(x, y, k, noise_variance, z).terms;
}

std::vector<std::size_t> farthest_point_sampling(const Matrix& x, std::size_t m) {
  g_fps_calls.fetch_add(1, std::memory_order_relaxed);
  const std::size_t n = x.rows();
  require(m <= n, ErrorKind::InvalidArgument, "fps: M must not exceed N");
  std::vector<std::size_t> chosen;
  if (m == 0) return chosen;
  chosen.reserve(m);

  // Selected points carry -1 so they never win the argmax, even among duplicates.
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t current = 0;
  for (;;) {
    chosen.push_back(current);
    dist[current] = -1.0;
    if (chosen.size() == m) break;
    const double* c = x.row(current).data();
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] < 0.0) continue;
      dist[i] = std::min(dist[i], simd::sqdist(x.row(i).data(), c, x.cols()));
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    current = best;
  }
  return chosen;
}

std::size_t fps_invocation_count() noexcept { return g_fps_calls.load(std::memory_order_relaxed); }

SparseState sparse_fit_fixed(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                             Matrix z) {
  require(all_finite(x.values()) && all_finite(y), ErrorKind::NonFinite, "sparse fit: non-finite training data");
  VfeCore core = vfe_core(x, y, k, noise_variance, z);
  SparseState s;
  s.z_ = std::move(z);
  s.kernel_ = k;
  s.noise_ = noise_variance;
  s.elbo_ = core.terms.value;

  // weights = L_uu⁻ᵀ L_B⁻ᵀ c / σ²
  Vector w = trisolve(core.lb, core.c, Triangle::UpperTransposed);
  w = trisolve(core.luu, w, Triangle::UpperTransposed);
  for (double& v : w) v /= noise_variance;
  s.weights_ = std::move(w);

  s.sigma_.lower = matmul(core.luu.lower, core.lb.lower);
  s.sigma_.jitter_used = core.luu.jitter_used;
  s.kuu_ = std::move(core.luu);
  s.whitened_ = std::move(core.lb);
  return s;
}

SparseState sparse_fit(const Matrix& x, std::span<const double> y, const KernelExpr& k, double noise_variance,
                       std::size_t m, const OptimizerConfig& opt, const SparseState* warm) {
  require(m >= 1 && m <= x.rows(), ErrorKind::InvalidArgument, "sparse fit: need 1 <= M <= N");
  Matrix z;
  if (warm) {
    require(warm->inducing().rows() == m, ErrorKind::InvalidArgument, "sparse fit: warm state has a different M");
    require(warm->inducing().cols() == x.cols(), ErrorKind::DimensionMismatch,
            "sparse fit: warm state has a different input dimension");
    z = warm->inducing();
  } else {
    const auto idx = farthest_point_sampling(x, m);
    z = x.select_rows(idx);
  }

  KernelExpr kernel = k;
  double noise = noise_variance;
  OptimizeResult trace;
  if (opt.steps > 0) {
    auto objective = [&](const ParamVector& p) {
      try {
        const auto [kp, np] = unflatten_model_params(k, p);
        return vfe_objective(x, y, kp, np, z).value;
      } catch (const Error&) {
        return std::numeric_limits<double>::quiet_NaN();
      }
    };
    trace = optimize_hyperparams(objective, flatten_model_params(k, noise_variance), opt);
    std::tie(kernel, noise) = unflatten_model_params(k, trace.best);
  }
  SparseState s = sparse_fit_fixed(x, y, kernel, noise, std::move(z));
  s.optimization_ = std::move(trace);
  return s;
}

Prediction sparse_predict(const SparseState& s, const Matrix& x_test) {
  require(x_test.cols() == s.z_.cols(), ErrorKind::DimensionMismatch, "predict: feature dimension mismatch");
  require(all_finite(x_test.values()), ErrorKind::NonFinite, "predict: non-finite test input");
  const std::size_t t_count = x_test.rows();
  const std::size_t m = s.z_.rows();
  Prediction out{Vector(t_count), Vector(t_count)};
  if (t_count == 0) return out;

  const Matrix kus = kernel_eval(s.kernel_, s.z_, x_test);  // M×T
  const Vector kss = kernel_diag(s.kernel_, x_test);
  const Matrix a = trisolve(s.kuu_, kus, Triangle::Lower);
  const Matrix b = trisolve(s.whitened_, a, Triangle::Lower);
  for (std::size_t t = 0; t < t_count; ++t) {
    double mean = 0.0;
    double qa = 0.0;
    double qb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      mean += kus(i, t) * s.weights_[i];
      qa += a(i, t) * a(i, t);
      qb += b(i, t) * b(i, t);
    }
    out.mean[t] = mean;
    out.variance[t] = std::max(0.0, kss[t] - qa + qb);
  }
  return out;
}

}  // namespace gpc
