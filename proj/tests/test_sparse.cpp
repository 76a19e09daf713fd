#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "gpc/error.hpp"
#include "gpc/linalg.hpp"
#include "gpc/models.hpp"
#include "oracles.hpp"

using namespace gpc;

namespace {

struct Data {
  Matrix x;
  Vector y;
};

Data make_data(std::size_t n, std::size_t d, std::uint64_t seed) {
  Data out{oracle::random_matrix(n, d, seed, 0.0, 1.0), Vector(n)};
  const auto eps = oracle::random_vector(n, seed + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += std::cos(4.0 * out.x(i, k));
    out.y[i] = s + 0.1 * eps[i];
  }
  return out;
}

// Quadratic greedy max-min: recompute every candidate's distance to the whole chosen set.
std::vector<std::size_t> brute_fps(const Matrix& x, std::size_t m) {
  std::vector<std::size_t> chosen{0};
  while (chosen.size() < m) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double d = HUGE_VAL;
      for (std::size_t c : chosen) d = std::min(d, oracle::sqdist(x.row(i).data(), x.row(c).data(), x.cols()));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

double exact_lml(const Data& d, const KernelExpr& k, double noise) {
  return log_marginal_likelihood(gp_fit(d.x, d.y, k, noise, Strategy::Cholesky));
}

}  // namespace

TEST(Fps, LineExample) {
  Matrix x(3, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 1.0;
  x(2, 0) = 10.0;
  EXPECT_EQ(farthest_point_sampling(x, 2), (std::vector<std::size_t>{0, 2}));
}

TEST(Fps, AllPointsWhenMEqualsN) {
  const Matrix x = oracle::random_matrix(12, 2, 1);
  const auto idx = farthest_point_sampling(x, 12);
  EXPECT_EQ(idx.front(), 0u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 12u);
  EXPECT_EQ(idx, brute_fps(x, 12));
}

TEST(Fps, MatchesBruteForce) {
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    const Matrix x = oracle::random_matrix(100, 3, seed);
    EXPECT_EQ(farthest_point_sampling(x, 10), brute_fps(x, 10));
  }
}

TEST(Fps, TiesGoToLowestIndex) {
  // Points 1 and 2 are both at distance 1 from point 0.
  Matrix x(4, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 1.0;
  x(2, 0) = -1.0;
  x(3, 0) = 0.5;
  EXPECT_EQ(farthest_point_sampling(x, 2), (std::vector<std::size_t>{0, 1}));
}

TEST(Fps, CountsInvocationsAndRejectsLargeM) {
  const Matrix x = oracle::random_matrix(5, 1, 5);
  const std::size_t before = fps_invocation_count();
  farthest_point_sampling(x, 3);
  EXPECT_EQ(fps_invocation_count(), before + 1);
  EXPECT_THROW(farthest_point_sampling(x, 6), Error);
}

TEST(Vfe, CollapsesToExactWhenZEqualsX) {
  const Data d = make_data(150, 2, 6);
  const KernelExpr k = KernelExpr::parse("(scale 1.3 (matern52 0.4))");
  const double lml = exact_lml(d, k, 0.05);
  const VfeTerms f = vfe_objective(d.x, d.y, k, 0.05, d.x);
  EXPECT_LE(std::abs(f.value - lml), 1e-6 * std::abs(lml));
  EXPECT_LE(std::abs(f.trace_penalty), 1e-6);
}

TEST(Vfe, IsALowerBound) {
  const Data d = make_data(200, 2, 7);
  const KernelExpr k = KernelExpr::rbf(0.3);
  const Matrix z = oracle::random_matrix(10, 2, 8, 0.0, 1.0);
  const VfeTerms f = vfe_objective(d.x, d.y, k, 0.02, z);
  EXPECT_LE(f.value, exact_lml(d, k, 0.02) + 1e-8);
  EXPECT_GE(f.trace_penalty, -1e-10);
}

TEST(Vfe, BoundHoldsAcrossRandomConfigs) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 30 + rng() % 200;
    const std::size_t m = 1 + rng() % 30;
    const std::size_t dim = 1 + rng() % 3;
    const Data d = make_data(n, dim, rng());
    const KernelExpr k = KernelExpr::scale(0.5 + (rng() % 100) / 50.0, KernelExpr::matern32(0.2 + (rng() % 100) / 100.0));
    const double noise = 0.01 + (rng() % 100) / 200.0;
    const Matrix z = oracle::random_matrix(m, dim, rng(), 0.0, 1.0);
    const VfeTerms f = vfe_objective(d.x, d.y, k, noise, z);
    EXPECT_LE(f.value, exact_lml(d, k, noise) + 1e-8) << "config " << t;
    EXPECT_GE(f.trace_penalty, -1e-10);
  }
}

TEST(Vfe, Errors) {
  const Data d = make_data(10, 1, 10);
  EXPECT_THROW(vfe_objective(d.x, d.y, KernelExpr::rbf(0.3), 0.1, oracle::random_matrix(11, 1, 11)), Error);
  EXPECT_THROW(vfe_objective(d.x, d.y, KernelExpr::rbf(0.3), 0.1, oracle::random_matrix(3, 2, 12)), Error);
}

TEST(SparseFit, FullInducingSetMatchesExact) {
  const Data d = make_data(120, 2, 13);
  const KernelExpr k = KernelExpr::rbf(0.35);
  const Matrix xt = oracle::random_matrix(30, 2, 14, 0.0, 1.0);
  const SparseState s = sparse_fit_fixed(d.x, d.y, k, 0.05, d.x);
  const Prediction ps = sparse_predict(s, xt);
  const Prediction pe = gp_predict(gp_fit(d.x, d.y, k, 0.05, Strategy::Cholesky), xt);
  EXPECT_LE(max_abs_diff(ps.mean, pe.mean), 1e-5);
  EXPECT_LE(max_abs_diff(ps.variance, pe.variance), 1e-5);

  OptimizerConfig none;
  const SparseState cold = sparse_fit(d.x, d.y, k, 0.05, 120, none);
  EXPECT_LE(max_abs_diff(sparse_predict(cold, xt).mean, pe.mean), 1e-5);
  EXPECT_NEAR(cold.elbo(), exact_lml(Data{d.x, d.y}, k, 0.05), 1e-6 * std::abs(cold.elbo()));
}

TEST(SparseFit, ColdFitUsesFarthestPoints) {
  const Data d = make_data(80, 2, 15);
  const SparseState s = sparse_fit(d.x, d.y, KernelExpr::rbf(0.3), 0.1, 7, OptimizerConfig{});
  const auto idx = farthest_point_sampling(d.x, 7);
  ASSERT_EQ(s.inducing().rows(), 7u);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(s.inducing()(r, c), d.x(idx[r], c));
}

TEST(SparseFit, WarmRefitSkipsFps) {
  const Data d = make_data(100, 1, 16);
  OptimizerConfig opt;
  opt.steps = 2;
  const SparseState cold = sparse_fit(d.x, d.y, KernelExpr::rbf(0.3), 0.1, 10, opt);
  const std::size_t before = fps_invocation_count();
  const SparseState warm = sparse_fit(d.x, d.y, cold.kernel(), cold.noise_variance(), 10, opt, &cold);
  EXPECT_EQ(fps_invocation_count(), before);
  EXPECT_EQ(warm.inducing().values().size(), cold.inducing().values().size());
  EXPECT_TRUE(std::equal(warm.inducing().values().begin(), warm.inducing().values().end(),
                         cold.inducing().values().begin()));
}

TEST(SparseFit, OptimizationImprovesBound) {
  const Data d = make_data(150, 1, 17);
  OptimizerConfig opt;
  opt.steps = 20;
  const KernelExpr k0 = KernelExpr::scale(1.0, KernelExpr::rbf(1.0));
  const SparseState s0 = sparse_fit(d.x, d.y, k0, 0.5, 15, OptimizerConfig{});
  const SparseState s1 = sparse_fit(d.x, d.y, k0, 0.5, 15, opt);
  EXPECT_GT(s1.elbo(), s0.elbo());
  EXPECT_EQ(s1.optimization().evaluations, 20u * (2u * 3u + 1u));
}

TEST(SparsePredict, FarPointRevertsToPrior) {
  const Data d = make_data(60, 2, 18);
  const SparseState s = sparse_fit(d.x, d.y, KernelExpr::scale(1.7, KernelExpr::rbf(0.2)), 0.1, 12, OptimizerConfig{});
  Matrix far(1, 2);
  far(0, 0) = 40.0;
  far(0, 1) = 40.0;
  const Prediction p = sparse_predict(s, far);
  EXPECT_NEAR(p.mean[0], 0.0, 1e-6);
  EXPECT_NEAR(p.variance[0], 1.7, 1e-6);
}

TEST(SparsePredict, VarianceNeverExceedsPrior) {
  const Data d = make_data(200, 2, 19);
  const KernelExpr k = KernelExpr::parse("(scale 2 (matern12 0.3))");
  const SparseState s = sparse_fit(d.x, d.y, k, 0.05, 25, OptimizerConfig{});
  const Matrix xt = oracle::random_matrix(100, 2, 20, -0.5, 1.5);
  const Prediction p = sparse_predict(s, xt);
  const Vector prior = kernel_diag(k, xt);
  for (std::size_t i = 0; i < xt.rows(); ++i) {
    EXPECT_LE(p.variance[i], prior[i] + 1e-8);
    EXPECT_GE(p.variance[i], 0.0);
  }
  EXPECT_THROW(sparse_predict(s, Matrix(2, 3)), Error);
}

TEST(SparsePredict, SubsetRmseCloseToExact) {
  const Data d = make_data(5000, 1, 21);
  const KernelExpr k = KernelExpr::rbf(0.2);
  Matrix xt(200, 1);
  Vector yt(200);
  for (std::size_t i = 0; i < 200; ++i) {
    xt(i, 0) = (static_cast<double>(i) + 0.5) / 200.0;
    yt[i] = std::cos(4.0 * xt(i, 0));
  }
  const Prediction pe = gp_predict(gp_fit(d.x, d.y, k, 0.01, Strategy::Cholesky), xt);
  const Prediction ps = sparse_predict(sparse_fit(d.x, d.y, k, 0.01, 200, OptimizerConfig{}), xt);
  const double re = metrics(pe.mean, pe.variance, 0.01, yt).rmse;
  const double rs = metrics(ps.mean, ps.variance, 0.01, yt).rmse;
  EXPECT_LE(rs, 1.15 * re);
}
