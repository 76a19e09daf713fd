#include "gpc/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "gpc/parallel.hpp"
#include "gpc/simd.hpp"

namespace gpc {

namespace {

constexpr int kJitterEscalations = 3;
constexpr double kJitterStart = 1e-10;
constexpr double kSymmetryTolerance = 1e-8;
// Inner lengths up to this use an inline loop in matmul.
constexpr std::size_t kShortDot = 3;

// Row-oriented Cholesky–Banachiewicz: every inner product runs over two
// contiguous row prefixes of L. Rows go in groups of four so each earlier row
// of L is streamed once per group. Returns false on a non-positive pivot.
bool try_factor(const Matrix& a, double jitter, Matrix& l) {
  const std::size_t n = a.rows();
  std::fill(l.values().begin(), l.values().end(), 0.0);
  auto finish_row = [&](std::size_t i, std::size_t j_begin) {
    double* li = l.row(i).data();
    for (std::size_t j = j_begin; j < i; ++j) {
      const double* lj = l.row(j).data();
      li[j] = (a(i, j) - simd::dot(li, lj, j)) / lj[j];
    }
    const double pivot = a(i, i) + jitter - simd::dot(li, li, i);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return false;
    li[i] = std::sqrt(pivot);
    return true;
  };

  std::size_t i0 = 0;
  for (; i0 + 4 <= n; i0 += 4) {
    double* lb = l.row(i0).data();
    std::size_t j = 0;
    double s[8];
    for (; j + 2 <= i0; j += 2) {
      const double* lj = l.row(j).data();
      const double* lk = lj + n;
      simd::dot4x2(lb, n, lj, n, j, s, 4);
      for (std::size_t r = 0; r < 4; ++r) {
        double* li = lb + r * n;
        li[j] = (a(i0 + r, j) - s[r]) / lj[j];
        li[j + 1] = (a(i0 + r, j + 1) - s[4 + r] - li[j] * lk[j]) / lk[j + 1];
      }
    }
    for (std::size_t r = 0; r < 4; ++r)
      if (!finish_row(i0 + r, j)) return false;
  }
  for (; i0 < n; ++i0)
    if (!finish_row(i0, 0)) return false;
  return true;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b, bool transpose_a, bool transpose_b) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) fail(ErrorKind::DimensionMismatch, "matmul: inner dimensions disagree");

  // Bring op(A) to row form and op(B) to column-as-row form so every entry is dot(row, row).
  Matrix a_packed;
  Matrix b_packed;
  if (transpose_a) a_packed = a.transposed();
  if (!transpose_b) b_packed = b.transposed();
  const Matrix& ar = transpose_a ? a_packed : a;
  const Matrix& bc = transpose_b ? b : b_packed;

  Matrix c(m, n);
  parallel_for(m, std::max<std::size_t>(1, 4096 / std::max<std::size_t>(1, n * k)),
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i) {
                   const double* ai = ar.row(i).data();
                   double* ci = c.row(i).data();
                   if (k <= kShortDot) {
                     // Dispatch costs more than the arithmetic here.
                     const double* bj = bc.data();
                     for (std::size_t j = 0; j < n; ++j, bj += k) {
                       double s = 0.0;
                       for (std::size_t l = 0; l < k; ++l) s += ai[l] * bj[l];
                       ci[j] = s;
                     }
                   } else {
                     for (std::size_t j = 0; j < n; ++j) ci[j] = simd::dot(ai, bc.row(j).data(), k);
                   }
                 }
               });
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), ErrorKind::DimensionMismatch, "matvec: length mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = simd::dot(a.row(i).data(), x.data(), x.size());
  return y;
}

CholeskyFactor cholesky(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorKind::NonSquare, "cholesky: matrix must be square");
  require(all_finite(a.values()), ErrorKind::NonFinite, "cholesky: non-finite entry");
  const std::size_t n = a.rows();

  const double scale = norm_inf(a.values());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > kSymmetryTolerance * scale)
        fail(ErrorKind::NonSymmetric, "cholesky: matrix is not symmetric");

  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += a(i, i);
  mean_diag = n ? mean_diag / static_cast<double>(n) : 0.0;

  CholeskyFactor f{Matrix(n, n), 0.0};
  if (try_factor(a, 0.0, f.lower)) return f;

  double jitter = kJitterStart * std::abs(mean_diag);
  for (int attempt = 0; attempt <= kJitterEscalations && jitter > 0.0; ++attempt, jitter *= 10.0) {
    if (try_factor(a, jitter, f.lower)) {
      f.jitter_used = jitter;
      return f;
    }
  }
  fail(ErrorKind::NotPositiveDefinite, "cholesky: factorization failed after jitter escalation");
}

Matrix trisolve(const CholeskyFactor& factor, const Matrix& b, Triangle mode) {
  const Matrix& l = factor.lower;
  const std::size_t n = l.rows();
  require(l.cols() == n, ErrorKind::NonSquare, "trisolve: factor must be square");
  require(b.rows() == n, ErrorKind::DimensionMismatch, "trisolve: right-hand side row count");
  for (std::size_t i = 0; i < n; ++i)
    if (l(i, i) == 0.0) fail(ErrorKind::Singular, "trisolve: zero diagonal entry");

  Matrix x = b;
  const std::size_t t = b.cols();
  // Column chunks are independent; each keeps the same substitution order.
  parallel_for(t, 64, [&](std::size_t c0, std::size_t c1) {
    const std::size_t w = c1 - c0;
    if (mode == Triangle::Lower) {
      for (std::size_t i = 0; i < n; ++i) {
        double* xi = x.row(i).data() + c0;
        const double* li = l.row(i).data();
        for (std::size_t k = 0; k < i; ++k)
          if (li[k] != 0.0) simd::axpy(-li[k], x.row(k).data() + c0, xi, w);
        const double inv = 1.0 / li[i];
        for (std::size_t c = 0; c < w; ++c) xi[c] *= inv;
      }
    } else {
      for (std::size_t ii = n; ii-- > 0;) {
        double* xi = x.row(ii).data() + c0;
        const double* li = l.row(ii).data();
        const double inv = 1.0 / li[ii];
        for (std::size_t c = 0; c < w; ++c) xi[c] *= inv;
        for (std::size_t k = 0; k < ii; ++k)
          if (li[k] != 0.0) simd::axpy(-li[k], xi, x.row(k).data() + c0, w);
      }
    }
  });
  return x;
}

Vector trisolve(const CholeskyFactor& factor, std::span<const double> b, Triangle mode) {
  const Matrix& l = factor.lower;
  const std::size_t n = l.rows();
  require(b.size() == n, ErrorKind::DimensionMismatch, "trisolve: right-hand side length");
  for (std::size_t i = 0; i < n; ++i)
    if (l(i, i) == 0.0) fail(ErrorKind::Singular, "trisolve: zero diagonal entry");

  Vector x(b.begin(), b.end());
  if (mode == Triangle::Lower) {
    for (std::size_t i = 0; i < n; ++i) x[i] = (x[i] - simd::dot(l.row(i).data(), x.data(), i)) / l(i, i);
  } else {
    for (std::size_t i = n; i-- > 0;) {
      x[i] /= l(i, i);
      simd::axpy(-x[i], l.row(i).data(), x.data(), i);
    }
  }
  return x;
}

Vector cholesky_solve(const CholeskyFactor& factor, std::span<const double> b) {
  const Vector z = trisolve(factor, b, Triangle::Lower);
  return trisolve(factor, z, Triangle::UpperTransposed);
}

double logdet_from_chol(const CholeskyFactor& factor) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < factor.order(); ++i) s += std::log(factor.lower(i, i));
  return 2.0 * s;
}

Vector row_sqnorms(const Matrix& x) {
  Vector out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = simd::dot(x.row(i).data(), x.row(i).data(), x.cols());
  return out;
}

Matrix pairwise_sqdist(const Matrix& x, const Matrix& y) {
  require(x.cols() == y.cols(), ErrorKind::DimensionMismatch, "pairwise_sqdist: feature dimension mismatch");
  return pairwise_sqdist(x, y, row_sqnorms(y));
}

namespace {

// Inner product and norm corrections in one pass; the compiler vectorizes over j for fixed D.
template <std::size_t D>
void sqdist_rows(const Matrix& x, const Matrix& y, std::span<const double> y_sqnorms, Matrix& g) {
  const std::size_t m = y.rows();
  const double* yv = y.data();
  const double* yn = y_sqnorms.data();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i).data();
    double xn = 0.0;
    for (std::size_t l = 0; l < D; ++l) xn += xi[l] * xi[l];
    double* gi = g.row(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < D; ++l) s += xi[l] * yv[j * D + l];
      gi[j] = std::max(0.0, xn + yn[j] - 2.0 * s);
    }
  }
}

Matrix sqdist_short(const Matrix& x, const Matrix& y, std::span<const double> y_sqnorms) {
  Matrix g(x.rows(), y.rows());
  switch (x.cols()) {
    case 1: sqdist_rows<1>(x, y, y_sqnorms, g); break;
    case 2: sqdist_rows<2>(x, y, y_sqnorms, g); break;
    case 3: sqdist_rows<3>(x, y, y_sqnorms, g); break;
    default: sqdist_rows<0>(x, y, y_sqnorms, g); break;
  }
  return g;
}

}  // namespace

Matrix pairwise_sqdist(const Matrix& x, const Matrix& y, std::span<const double> y_sqnorms) {
  require(x.cols() == y.cols(), ErrorKind::DimensionMismatch, "pairwise_sqdist: feature dimension mismatch");
  require(y_sqnorms.size() == y.rows(), ErrorKind::DimensionMismatch, "pairwise_sqdist: norm length");
  const std::size_t d = x.cols();
  if (d <= kShortDot) return sqdist_short(x, y, y_sqnorms);
  Matrix g = matmul(x, y, false, true);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double xn = simd::dot(x.row(i).data(), x.row(i).data(), d);
    double* gi = g.row(i).data();
    for (std::size_t j = 0; j < y.rows(); ++j) gi[j] = std::max(0.0, xn + y_sqnorms[j] - 2.0 * gi[j]);
  }
  return g;
}

}  // namespace gpc
