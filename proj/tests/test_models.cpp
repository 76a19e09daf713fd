#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gpc/error.hpp"
#include "gpc/linalg.hpp"
#include "gpc/bench.hpp"
#include "gpc/models.hpp"
#include "oracles.hpp"

using namespace gpc;

namespace {

struct Data {
  Matrix x;
  Vector y;
};

// Smooth target plus small deterministic noise.
Data make_data(std::size_t n, std::size_t d, std::uint64_t seed) {
  Data out{oracle::random_matrix(n, d, seed, 0.0, 1.0), Vector(n)};
  const auto eps = oracle::random_vector(n, seed + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += std::sin(3.0 * out.x(i, k) + static_cast<double>(k));
    out.y[i] = s + 0.05 * eps[i];
  }
  return out;
}

Matrix column(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Fit and predict

TEST(GpFit, ScalarAlpha) {
  const ExactState s = gp_fit(column({0.3}), Vector{2.0}, KernelExpr::rbf(1.0), 1.0, Strategy::Cholesky);
  ASSERT_EQ(s.alpha().size(), 1u);
  EXPECT_DOUBLE_EQ(s.alpha()[0], 1.0);
  EXPECT_EQ(s.strategy(), Strategy::Cholesky);
}

TEST(GpFit, CgAlphaMatchesCholesky) {
  const Data d = make_data(500, 2, 1);
  const KernelExpr k = KernelExpr::parse("(scale 1.5 (rbf 0.3))");
  const ExactState c = gp_fit(d.x, d.y, k, 0.05, Strategy::Cholesky);
  FitOptions tight;
  tight.cg.rel_tolerance = 1e-10;
  const ExactState g = gp_fit(d.x, d.y, k, 0.05, Strategy::CG, tight);
  EXPECT_LE(max_abs_diff(c.alpha(), g.alpha()), 1e-6);
}

TEST(GpFit, AlphaResidualBound) {
  const Data d = make_data(300, 1, 2);
  const KernelExpr k = KernelExpr::rbf(0.2);
  for (Strategy st : {Strategy::Cholesky, Strategy::CG}) {
    const ExactState s = gp_fit(d.x, d.y, k, 0.01, st);
    const Vector r = matrix_free_matvec(k, d.x, 0.01, s.alpha());
    double rr = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      rr += (r[i] - d.y[i]) * (r[i] - d.y[i]);
      yy += d.y[i] * d.y[i];
    }
    EXPECT_LE(std::sqrt(rr), 1e-5 * std::sqrt(yy)) << to_string(st);
  }
}

TEST(GpFit, AutoThresholds) {
  EXPECT_EQ(resolve_strategy(Strategy::Auto, 200, 1), Strategy::Cholesky);
  EXPECT_EQ(resolve_strategy(Strategy::Auto, 4000, 3), Strategy::Cholesky);
  EXPECT_EQ(resolve_strategy(Strategy::Auto, 10000, 1), Strategy::SKI);
  EXPECT_EQ(resolve_strategy(Strategy::Auto, 10000, 2), Strategy::CG);
  EXPECT_EQ(resolve_strategy(Strategy::CG, 10, 1), Strategy::CG);
  FitOptions o;
  o.auto_cholesky_max_n = 100;
  EXPECT_EQ(resolve_strategy(Strategy::Auto, 200, 2, o), Strategy::CG);
  const Data d = make_data(50, 1, 3);
  EXPECT_EQ(gp_fit(d.x, d.y, KernelExpr::rbf(0.3), 0.1, Strategy::Auto).strategy(), Strategy::Cholesky);
}

TEST(GpFit, SkiGridDefault) {
  EXPECT_EQ(default_ski_grid_size(100), 128u);
  EXPECT_EQ(default_ski_grid_size(10000), 512u);
  EXPECT_EQ(default_ski_grid_size(1u << 30), 1u << 15);
}

TEST(GpFit, StrategyNames) {
  for (Strategy s : {Strategy::Cholesky, Strategy::CG, Strategy::SKI, Strategy::Auto})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("lu"), Error);
}

TEST(GpFit, Errors) {
  const Data d = make_data(20, 2, 4);
  const KernelExpr k = KernelExpr::rbf(0.3);
  EXPECT_THROW(gp_fit(d.x, d.y, k, 0.0, Strategy::Cholesky), Error);
  EXPECT_THROW(gp_fit(d.x, Vector(19, 0.0), k, 0.1, Strategy::Cholesky), Error);
  EXPECT_THROW(gp_fit(Matrix(0, 2), Vector{}, k, 0.1, Strategy::Cholesky), Error);
  try {
    gp_fit(d.x, d.y, k, 0.1, Strategy::SKI);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unsupported);
  }
  const ExactState s = gp_fit(d.x, d.y, k, 0.1, Strategy::Cholesky);
  EXPECT_THROW(gp_predict(s, Matrix(3, 3)), Error);
}

TEST(GpPredict, NearInterpolationMatchesHandSolve) {
  // N=2 closed form: K = [[1, c], [c, 1]] with c = exp(-½(Δ/ℓ)²).
  const Matrix x = column({0.0, 0.5});
  const Vector y{1.0, -0.5};
  const double noise = 1e-8;
  const double c = std::exp(-0.5 * 0.25 / 0.09);
  const double det = (1 + noise) * (1 + noise) - c * c;
  const double a0 = ((1 + noise) * y[0] - c * y[1]) / det;
  const double a1 = (-c * y[0] + (1 + noise) * y[1]) / det;
  const ExactState s = gp_fit(x, y, KernelExpr::rbf(0.3), noise, Strategy::Cholesky);
  EXPECT_NEAR(s.alpha()[0], a0, 1e-6 * std::abs(a0));
  EXPECT_NEAR(s.alpha()[1], a1, 1e-6 * std::abs(a1));
  const Prediction p = gp_predict(s, x);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(p.mean[i], y[i], 1e-3);
    EXPECT_LE(p.variance[i], 1e-3);
    EXPECT_GE(p.variance[i], 0.0);
  }
}

TEST(GpPredict, FarPointRevertsToPrior) {
  const Data d = make_data(100, 2, 5);
  const KernelExpr k = KernelExpr::parse("(scale 2 (matern32 0.2))");
  Matrix far(1, 2);
  far(0, 0) = 50.0;
  far(0, 1) = -40.0;
  for (Strategy st : {Strategy::Cholesky, Strategy::CG}) {
    const Prediction p = gp_predict(gp_fit(d.x, d.y, k, 0.1, st), far);
    EXPECT_NEAR(p.mean[0], 0.0, 1e-6);
    EXPECT_NEAR(p.variance[0], 2.0, 1e-6);
  }
}

TEST(GpPredict, CgMatchesCholesky) {
  const Data d = make_data(400, 3, 6);
  const KernelExpr k = KernelExpr::rbf(0.4);
  const Matrix xt = oracle::random_matrix(60, 3, 7, 0.0, 1.0);
  const Prediction pc = gp_predict(gp_fit(d.x, d.y, k, 0.05, Strategy::Cholesky), xt);
  const Prediction pg = gp_predict(gp_fit(d.x, d.y, k, 0.05, Strategy::CG), xt);
  EXPECT_LE(max_abs_diff(pc.mean, pg.mean), 1e-5);
  EXPECT_LE(max_abs_diff(pc.variance, pg.variance), 3e-3);
  EXPECT_EQ(gp_predict_mean(gp_fit(d.x, d.y, k, 0.05, Strategy::Cholesky), xt), pc.mean);
}

TEST(GpPredict, SkiMatchesCholesky) {
  const Data d = make_data(1000, 1, 8);
  const KernelExpr k = KernelExpr::rbf(0.15);
  Matrix xt(50, 1);
  for (std::size_t i = 0; i < 50; ++i) xt(i, 0) = 0.02 * static_cast<double>(i);
  const Prediction pc = gp_predict(gp_fit(d.x, d.y, k, 0.05, Strategy::Cholesky), xt);
  const ExactState ski = gp_fit(d.x, d.y, k, 0.05, Strategy::SKI);
  ASSERT_TRUE(ski.ski().has_value());
  EXPECT_GE(ski.ski()->grid_size, 4.0 * std::sqrt(1000.0));
  const Prediction ps = gp_predict(ski, xt);
  EXPECT_LE(max_abs_diff(pc.mean, ps.mean), 1e-3);
  EXPECT_LE(max_abs_diff(ps.mean, gp_predict_mean(ski, xt)), 1e-12);
  for (double v : ps.variance) EXPECT_GE(v, 0.0);
}

TEST(GpPredict, PermutationEquivariance) {
  const Data d = make_data(150, 2, 9);
  std::vector<std::size_t> perm(150);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 37, perm.end());
  Matrix xp(150, 2);
  Vector yp(150);
  for (std::size_t i = 0; i < 150; ++i) {
    xp(i, 0) = d.x(perm[i], 0);
    xp(i, 1) = d.x(perm[i], 1);
    yp[i] = d.y[perm[i]];
  }
  const KernelExpr k = KernelExpr::parse("(+ (rbf 0.3) (scale 0.5 (matern12 0.7)))");
  const Matrix xt = oracle::random_matrix(20, 2, 10, 0.0, 1.0);
  const ExactState a = gp_fit(d.x, d.y, k, 0.02, Strategy::Cholesky);
  const ExactState b = gp_fit(xp, yp, k, 0.02, Strategy::Cholesky);
  const Prediction pa = gp_predict(a, xt);
  const Prediction pb = gp_predict(b, xt);
  EXPECT_LE(max_abs_diff(pa.mean, pb.mean), 1e-10);
  EXPECT_LE(max_abs_diff(pa.variance, pb.variance), 1e-10);
  EXPECT_NEAR(log_marginal_likelihood(a), log_marginal_likelihood(b), 1e-10);
}

TEST(GpPredict, ScaleConsistency) {
  const Data d = make_data(120, 2, 11);
  const double c = 3.0;
  Vector yc = d.y;
  for (double& v : yc) v *= c;
  const KernelExpr k = KernelExpr::rbf(0.35);
  const Matrix xt = oracle::random_matrix(15, 2, 12, 0.0, 1.0);
  const Prediction p = gp_predict(gp_fit(d.x, d.y, KernelExpr::scale(1.0, k), 0.03, Strategy::Cholesky), xt);
  const Prediction pc = gp_predict(gp_fit(d.x, yc, KernelExpr::scale(c * c, k), c * c * 0.03, Strategy::Cholesky), xt);
  for (std::size_t i = 0; i < xt.rows(); ++i) {
    EXPECT_NEAR(pc.mean[i], c * p.mean[i], 1e-9);
    // Latent variance scales with the kernel amplitude.
    EXPECT_NEAR(pc.variance[i], c * c * p.variance[i], 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Marginal likelihood

TEST(Lml, ScalarFormula) {
  const ExactState s = gp_fit(column({0.0}), Vector{0.0}, KernelExpr::rbf(1.0), 1.0, Strategy::Cholesky);
  const double expect = -0.5 * std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(log_marginal_likelihood(s), expect, 1e-14);
  EXPECT_NEAR(log_marginal_likelihood(s), -1.2655, 1e-4);
}

TEST(Lml, MatchesDenseGaussianDensity) {
  const Data d = make_data(40, 2, 13);
  const KernelExpr k = KernelExpr::matern52(0.4);
  const double noise = 0.07;
  Matrix g = kernel_eval(k, d.x, d.x);
  for (std::size_t i = 0; i < 40; ++i) g(i, i) += noise;
  const auto sol = oracle::solve(oracle::to_dense(g), std::vector<double>(d.y.begin(), d.y.end()));
  double quad = 0.0;
  for (std::size_t i = 0; i < 40; ++i) quad += d.y[i] * sol[i];
  double logdet = 0.0;
  for (double ev : oracle::jacobi_eigenvalues(oracle::to_dense(g))) logdet += std::log(ev);
  const double expect = -0.5 * (quad + logdet + 40.0 * std::log(2.0 * std::numbers::pi));
  EXPECT_NEAR(log_marginal_likelihood(gp_fit(d.x, d.y, k, noise, Strategy::Cholesky)), expect, 1e-9);
}

// |logdet| is several times |LML| here, so 16 probes are not enough for 1% of the LML.
TEST(Lml, CgWithinOnePercentOfCholesky) {
  const Matrix x = oracle::random_matrix(300, 2, 14, 0.0, 1.0);
  const KernelExpr k = KernelExpr::rbf(0.3);
  const Vector y = bench::sample_gp(x, k, 0.3, 14);
  FitOptions opts;
  opts.cg.probes = 256;
  const double exact = log_marginal_likelihood(gp_fit(x, y, k, 0.1, Strategy::Cholesky));
  const double est = log_marginal_likelihood(gp_fit(x, y, k, 0.1, Strategy::CG, opts));
  EXPECT_LE(std::abs(est - exact), 0.01 * std::abs(exact));
}

// ---------------------------------------------------------------------------
// Optimizer

TEST(Optimizer, ConstantObjective) {
  OptimizerConfig opt;
  opt.steps = 10;
  const ParamVector p0{{0.3, -1.2}};
  const OptimizeResult r = optimize_hyperparams([](const ParamVector&) { return 4.0; }, p0, opt);
  EXPECT_EQ(r.best, p0);
  EXPECT_EQ(r.trace.size(), 10u);
  for (double v : r.trace) EXPECT_EQ(v, 4.0);
}

TEST(Optimizer, QuadraticOptimum) {
  OptimizerConfig opt;
  opt.steps = 200;
  const OptimizeResult r = optimize_hyperparams(
      [](const ParamVector& p) {
        double s = 0.0;
        for (double v : p.values) s -= (v - 1.0) * (v - 1.0);
        return s;
      },
      ParamVector{{0.0, 0.0, 0.0}}, opt);
  for (double v : r.best.values) EXPECT_LE(std::abs(v - 1.0), 0.05);
  EXPECT_EQ(r.evaluations, 200u * 7u);
  EXPECT_EQ(r.steps_taken, 200u);
}

TEST(Optimizer, EvaluationsPerStep) {
  for (std::size_t p : {1u, 4u, 10u}) {
    OptimizerConfig opt;
    opt.steps = 1;
    std::size_t calls = 0;
    const OptimizeResult r = optimize_hyperparams(
        [&](const ParamVector& v) {
          ++calls;
          return -v[0] * v[0];
        },
        ParamVector{std::vector<double>(p, 0.5)}, opt);
    EXPECT_EQ(calls, 2 * p + 1);
    EXPECT_EQ(r.evaluations, 2 * p + 1);
  }
}

TEST(Optimizer, ComposedKernelStepCostsTwentyOneFits) {
  const KernelExpr k = KernelExpr::parse(
      "(+ (+ (scale 1 (rbf 0.5)) (scale 1 (periodic 0.7 1.3)))"
      " (+ (scale 1 (matern32 0.4)) (* (scale 1 (matern52 0.6)) (linear 1))))");
  ASSERT_EQ(k.param_count(), 10u);
  const Data d = make_data(40, 1, 15);
  std::size_t fits = 0;
  OptimizerConfig opt;
  opt.steps = 1;
  optimize_hyperparams(
      [&](const ParamVector& p) {
        ++fits;
        return log_marginal_likelihood(gp_fit(d.x, d.y, unflatten_params(k, p), 0.05, Strategy::Cholesky));
      },
      flatten_params(k), opt);
  EXPECT_EQ(fits, 21u);
}

TEST(Optimizer, BestSeenIsMonotone) {
  OptimizerConfig opt;
  opt.steps = 50;
  opt.learning_rate = 0.5;
  const OptimizeResult r = optimize_hyperparams(
      [](const ParamVector& p) { return std::cos(3.0 * p[0]) - 0.1 * p[0] * p[0]; }, ParamVector{{0.4}}, opt);
  double best = -HUGE_VAL;
  for (double v : r.trace) best = std::max(best, v);
  EXPECT_EQ(r.best_value, best);
}

TEST(Optimizer, NonFiniteAbortsWithBestSoFar) {
  OptimizerConfig opt;
  opt.steps = 100;
  opt.learning_rate = 0.1;
  const OptimizeResult r = optimize_hyperparams(
      [](const ParamVector& p) { return p[0] > 0.5 ? NAN : p[0]; }, ParamVector{{0.0}}, opt);
  EXPECT_TRUE(r.aborted);
  EXPECT_LT(r.steps_taken, 100u);
  EXPECT_LE(r.best[0], 0.5);
  EXPECT_EQ(r.best_value, r.best[0]);
}

TEST(Optimizer, ConfigValidation) {
  OptimizerConfig opt;
  opt.learning_rate = 0.0;
  EXPECT_THROW(opt.validate(), Error);
  opt = {};
  opt.beta1 = 1.0;
  EXPECT_THROW(opt.validate(), Error);
  opt = {};
  opt.fd_epsilon = -1e-4;
  EXPECT_THROW(opt.validate(), Error);
}

TEST(Optimizer, ExactFitImprovesLml) {
  const Data d = make_data(150, 1, 16);
  OptimizerConfig opt;
  opt.steps = 30;
  const KernelExpr k0 = KernelExpr::scale(1.0, KernelExpr::rbf(1.0));
  const double before = log_marginal_likelihood(gp_fit(d.x, d.y, k0, 0.1, Strategy::Cholesky));
  const ExactFitResult r = optimize_exact(d.x, d.y, k0, 0.1, opt);
  const double after = log_marginal_likelihood(gp_fit(d.x, d.y, r.kernel, r.noise_variance, Strategy::Cholesky));
  EXPECT_GT(after, before);
  EXPECT_NEAR(after, r.optimization.best_value, 1e-9 * std::abs(after));
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, PerfectPredictionUnitDensity) {
  const double v = 1.0 / (2.0 * std::numbers::pi);
  const Vector y{1.0, -2.0, 0.5};
  const Metrics m = metrics(y, Vector(3, v / 2), v / 2, y);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_NEAR(m.nll, 0.0, 1e-15);
  EXPECT_EQ(m.coverage95, 1.0);
}

TEST(Metrics, HugeVarianceCoversEverything) {
  const Metrics m = metrics(Vector{0, 0, 0}, Vector(3, 1e12), 0.1, Vector{5.0, -30.0, 100.0});
  EXPECT_EQ(m.coverage95, 1.0);
}

TEST(Metrics, SinglePointDensity) {
  const Metrics m = metrics(Vector{0.0}, Vector{0.75}, 0.25, Vector{1.0});
  EXPECT_NEAR(m.nll, 0.5 * std::log(2.0 * std::numbers::pi) + 0.5, 1e-15);
  EXPECT_NEAR(m.nll, 1.4189, 1e-4);
  EXPECT_EQ(m.rmse, 1.0);
  EXPECT_EQ(m.coverage95, 1.0);
}

TEST(Metrics, CoverageCountsInterval) {
  // sd 1: 1.9 inside, 2.0 outside the 1.96 band.
  const Metrics m = metrics(Vector{0, 0, 0, 0}, Vector(4, 0.5), 0.5, Vector{1.9, -1.9, 2.0, 0.0});
  EXPECT_DOUBLE_EQ(m.coverage95, 0.75);
  EXPECT_NEAR(m.rmse, std::sqrt((1.9 * 1.9 * 2 + 4.0) / 4.0), 1e-15);
}

TEST(Metrics, LengthMismatch) {
  EXPECT_THROW(metrics(Vector{0.0}, Vector{1.0, 1.0}, 0.1, Vector{0.0}), Error);
}
