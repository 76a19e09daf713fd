#include "gpc/solvers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "gpc/linalg.hpp"
#include "gpc/simd.hpp"

namespace gpc {

std::size_t CgConfig::iteration_cap(std::size_t n) const noexcept {
  return max_iterations != 0 ? max_iterations : std::min<std::size_t>(n, 1000);
}

void CgConfig::validate() const {
  require(rel_tolerance > 0.0 && std::isfinite(rel_tolerance), ErrorKind::InvalidArgument,
          "cg: tolerance must be positive");
  require(probes >= 1 && lanczos_steps >= 1, ErrorKind::InvalidArgument, "cg: probe and step counts must be >= 1");
}

Matrix SymmetricOperator::apply_rows(const Matrix& vs) const {
  Matrix out(vs.rows(), vs.cols());
  for (std::size_t t = 0; t < vs.rows(); ++t) {
    const Vector r = apply(vs.row(t));
    std::copy(r.begin(), r.end(), out.row(t).data());
  }
  return out;
}

Vector FunctionOperator::apply(std::span<const double> v) const {
  Vector out = fn_(v);
  require(out.size() == n_, ErrorKind::DimensionMismatch, "operator returned wrong length");
  return out;
}

DenseOperator::DenseOperator(const Matrix& a) : a_(a) {
  require(a.rows() == a.cols(), ErrorKind::NonSquare, "dense operator must be square");
}

Vector DenseOperator::apply(std::span<const double> v) const { return matvec(a_, v); }

// ---------------------------------------------------------------------------

MatrixFreeOperator::MatrixFreeOperator(KernelExpr kernel, const Matrix& x, double noise_variance, std::size_t block)
    : kernel_(std::move(kernel)), x_(x), noise_(noise_variance), block_(block), x_sqnorms_(row_sqnorms(x)) {
  require(block >= 1, ErrorKind::InvalidArgument, "matrix-free matvec: block must be >= 1");
  require(std::isfinite(noise_variance) && noise_variance >= 0.0, ErrorKind::InvalidArgument,
          "matrix-free matvec: noise variance must be finite and nonnegative");
  require(all_finite(x.values()), ErrorKind::NonFinite, "matrix-free matvec: non-finite input");
}

Vector MatrixFreeOperator::apply(std::span<const double> v) const {
  const std::size_t n = x_.rows();
  require(v.size() == n, ErrorKind::DimensionMismatch, "matrix-free matvec: vector length");
  Vector out(n);
  for (std::size_t b0 = 0; b0 < n; b0 += block_) {
    const std::size_t b1 = std::min(n, b0 + block_);
    const Matrix slab = detail::kernel_eval_trusted(kernel_, x_.row_range(b0, b1), x_, x_sqnorms_);
    for (std::size_t i = b0; i < b1; ++i) out[i] = simd::dot(slab.row(i - b0).data(), v.data(), n) + noise_ * v[i];
  }
  return out;
}

Matrix MatrixFreeOperator::apply_rows(const Matrix& vs) const {
  const std::size_t n = x_.rows();
  require(vs.cols() == n, ErrorKind::DimensionMismatch, "matrix-free matvec: vector length");
  Matrix out(vs.rows(), n);
  for (std::size_t b0 = 0; b0 < n; b0 += block_) {
    const std::size_t b1 = std::min(n, b0 + block_);
    const Matrix slab = detail::kernel_eval_trusted(kernel_, x_.row_range(b0, b1), x_, x_sqnorms_);
    // Right-hand sides outer so each pair of vs rows is reused across the cached slab.
    std::size_t t = 0;
    for (; t + 2 <= vs.rows(); t += 2) {
      std::size_t i = b0;
      for (; i + 4 <= b1; i += 4) simd::dot4x2(slab.row(i - b0).data(), n, vs.row(t).data(), n, n, &out(t, i), n);
      for (; i < b1; ++i) {
        out(t, i) = simd::dot(slab.row(i - b0).data(), vs.row(t).data(), n);
        out(t + 1, i) = simd::dot(slab.row(i - b0).data(), vs.row(t + 1).data(), n);
      }
    }
    for (; t < vs.rows(); ++t)
      for (std::size_t i = b0; i < b1; ++i) out(t, i) = simd::dot(slab.row(i - b0).data(), vs.row(t).data(), n);
    for (t = 0; t < vs.rows(); ++t)
      for (std::size_t i = b0; i < b1; ++i) out(t, i) += noise_ * vs(t, i);
  }
  return out;
}

Vector matrix_free_matvec(const KernelExpr& k, const Matrix& x, double noise_variance, std::span<const double> v,
                          std::size_t block) {
  return MatrixFreeOperator(k, x, noise_variance, block).apply(v);
}

// ---------------------------------------------------------------------------
// Conjugate gradients

namespace {

Vector residual(const SymmetricOperator& op, std::span<const double> b, std::span<const double> x) {
  Vector r = op.apply(x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return r;
}

}  // namespace

CgResult cg_solve(const SymmetricOperator& op, std::span<const double> b, const CgConfig& cfg) {
  cfg.validate();
  const std::size_t n = op.size();
  require(b.size() == n, ErrorKind::DimensionMismatch, "cg: right-hand side length");
  require(all_finite(b), ErrorKind::NonFinite, "cg: right-hand side is not finite");

  CgResult res;
  res.x.assign(n, 0.0);
  const double b_norm = norm2(b);
  if (b_norm == 0.0) {
    res.converged = true;
    return res;
  }
  const double tol = cfg.rel_tolerance * b_norm;
  const std::size_t cap = cfg.iteration_cap(n);

  Vector r(b.begin(), b.end());
  Vector p = r;
  double rr = simd::dot(r.data(), r.data(), n);
  while (res.iterations < cap) {
    const Vector ap = op.apply(p);
    const double pap = simd::dot(p.data(), ap.data(), n);
    if (!(pap > 0.0)) fail(ErrorKind::OperatorNotSpd, "cg: breakdown, pᵀAp <= 0");
    const double step = rr / pap;
    simd::axpy(step, p.data(), res.x.data(), n);
    simd::axpy(-step, ap.data(), r.data(), n);
    ++res.iterations;

    double rr_next = simd::dot(r.data(), r.data(), n);
    if (std::sqrt(rr_next) <= tol) {
      // The recursive residual drifts; confirm against b − A·x and restart from it if needed.
      r = residual(op, b, res.x);
      rr_next = simd::dot(r.data(), r.data(), n);
      res.final_residual = std::sqrt(rr_next);
      if (res.final_residual <= tol) {
        res.converged = true;
        return res;
      }
      p = r;
      rr = rr_next;
      continue;
    }
    const double beta = rr_next / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_next;
  }
  res.final_residual = norm2(residual(op, b, res.x));
  res.converged = res.final_residual <= tol;
  return res;
}

CgResult cg_solve(const FunctionOperator::Fn& apply, std::span<const double> b, const CgConfig& cfg) {
  return cg_solve(FunctionOperator(b.size(), apply), b, cfg);
}

std::vector<CgResult> cg_solve_rows(const SymmetricOperator& op, const Matrix& bs, const CgConfig& cfg) {
  cfg.validate();
  const std::size_t n = op.size();
  const std::size_t t_count = bs.rows();
  require(bs.cols() == n, ErrorKind::DimensionMismatch, "cg: right-hand side length");
  require(all_finite(bs.values()), ErrorKind::NonFinite, "cg: right-hand side is not finite");
  const std::size_t cap = cfg.iteration_cap(n);

  struct RowState {
    Vector r, p;
    double rr = 0.0;
    double tol = 0.0;
    bool active = true;
  };
  std::vector<CgResult> res(t_count);
  std::vector<RowState> st(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    res[t].x.assign(n, 0.0);
    const auto b = bs.row(t);
    const double b_norm = norm2(b);
    st[t].tol = cfg.rel_tolerance * b_norm;
    if (b_norm == 0.0) {
      st[t].active = false;
      res[t].converged = true;
      continue;
    }
    st[t].r.assign(b.begin(), b.end());
    st[t].p = st[t].r;
    st[t].rr = simd::dot(st[t].r.data(), st[t].r.data(), n);
  }

  auto gather = [&](const std::vector<std::size_t>& rows, auto&& pick) {
    Matrix m(rows.size(), n);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Vector& src = pick(rows[k]);
      std::copy(src.begin(), src.end(), m.row(k).data());
    }
    return m;
  };

  std::vector<std::size_t> active;
  for (;;) {
    active.clear();
    for (std::size_t t = 0; t < t_count; ++t)
      if (st[t].active && res[t].iterations < cap) active.push_back(t);
    if (active.empty()) break;

    const Matrix aps = op.apply_rows(gather(active, [&](std::size_t t) -> const Vector& { return st[t].p; }));
    std::vector<std::size_t> verify;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t t = active[k];
      RowState& s = st[t];
      const double* ap = aps.row(k).data();
      const double pap = simd::dot(s.p.data(), ap, n);
      if (!(pap > 0.0)) fail(ErrorKind::OperatorNotSpd, "cg: breakdown, pᵀAp <= 0");
      const double step = s.rr / pap;
      simd::axpy(step, s.p.data(), res[t].x.data(), n);
      simd::axpy(-step, ap, s.r.data(), n);
      ++res[t].iterations;
      const double rr_next = simd::dot(s.r.data(), s.r.data(), n);
      if (std::sqrt(rr_next) <= s.tol) {
        verify.push_back(t);
        continue;
      }
      const double beta = rr_next / s.rr;
      for (std::size_t i = 0; i < n; ++i) s.p[i] = s.r[i] + beta * s.p[i];
      s.rr = rr_next;
    }

    if (!verify.empty()) {
      const Matrix axs = op.apply_rows(gather(verify, [&](std::size_t t) -> const Vector& { return res[t].x; }));
      for (std::size_t k = 0; k < verify.size(); ++k) {
        const std::size_t t = verify[k];
        RowState& s = st[t];
        for (std::size_t i = 0; i < n; ++i) s.r[i] = bs(t, i) - axs(k, i);
        s.rr = simd::dot(s.r.data(), s.r.data(), n);
        res[t].final_residual = std::sqrt(s.rr);
        if (res[t].final_residual <= s.tol) {
          res[t].converged = true;
          s.active = false;
        } else {
          s.p = s.r;
        }
      }
    }
  }

  std::vector<std::size_t> capped;
  for (std::size_t t = 0; t < t_count; ++t)
    if (st[t].active) capped.push_back(t);
  if (!capped.empty()) {
    const Matrix axs = op.apply_rows(gather(capped, [&](std::size_t t) -> const Vector& { return res[t].x; }));
    for (std::size_t k = 0; k < capped.size(); ++k) {
      const std::size_t t = capped[k];
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = bs(t, i) - axs(k, i);
        acc += d * d;
      }
      res[t].final_residual = std::sqrt(acc);
      res[t].converged = res[t].final_residual <= st[t].tol;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Stochastic Lanczos quadrature

TridiagonalEigen tridiagonal_eigen(std::vector<double> d, std::vector<double> e) {
  const int n = static_cast<int>(d.size());
  require(e.size() + 1 == d.size() || (d.empty() && e.empty()), ErrorKind::DimensionMismatch,
          "tridiagonal: off-diagonal must have n-1 entries");
  e.push_back(0.0);
  // Only the first row of the accumulated rotations is needed.
  std::vector<double> z(static_cast<std::size_t>(n), 0.0);
  if (n > 0) z[0] = 1.0;

  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd) break;
      }
      if (m != l) {
        if (iter++ == 60) fail(ErrorKind::NotConverged, "tridiagonal QL: too many iterations");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        int i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          f = z[i + 1];
          z[i + 1] = s * z[i] + c * f;
          z[i] = c * z[i] - s * f;
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  return {std::move(d), std::move(z)};
}

Vector rademacher(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 gen(seq);
  Vector z(n);
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 64 == 0) bits = gen();
    z[i] = (bits & 1u) ? 1.0 : -1.0;
    bits >>= 1;
  }
  return z;
}

double slq_logdet(const SymmetricOperator& op, const CgConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = op.size();
  require(n >= 1, ErrorKind::InvalidArgument, "slq: empty operator");
  const std::size_t steps = std::min(cfg.lanczos_steps, n);

  double total = 0.0;
  for (std::size_t probe = 0; probe < cfg.probes; ++probe) {
    const Vector z = rademacher(n, seed, probe);
    const double z_sq = simd::dot(z.data(), z.data(), n);
    const double inv_norm = 1.0 / std::sqrt(z_sq);

    Matrix q(steps, n);
    for (std::size_t i = 0; i < n; ++i) q(0, i) = z[i] * inv_norm;
    std::vector<double> alpha;
    std::vector<double> beta;
    for (std::size_t j = 0; j < steps; ++j) {
      double* qj = q.row(j).data();
      Vector w = op.apply(q.row(j));
      double a = simd::dot(qj, w.data(), n);
      simd::axpy(-a, qj, w.data(), n);
      if (j > 0) simd::axpy(-beta[j - 1], q.row(j - 1).data(), w.data(), n);
      // Full reorthogonalization, two passes.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i <= j; ++i) {
          const double c = simd::dot(q.row(i).data(), w.data(), n);
          simd::axpy(-c, q.row(i).data(), w.data(), n);
          if (i == j) a += c;
        }
      }
      alpha.push_back(a);
      const double b = norm2(w);
      const double scale = std::abs(a) + (j > 0 ? beta[j - 1] : 0.0);
      if (j + 1 == steps || b <= 1e-12 * scale) break;
      beta.push_back(b);
      double* next = q.row(j + 1).data();
      for (std::size_t i = 0; i < n; ++i) next[i] = w[i] / b;
    }

    const TridiagonalEigen eig = tridiagonal_eigen(alpha, beta);
    double quad = 0.0;
    for (std::size_t i = 0; i < eig.values.size(); ++i) {
      if (!(eig.values[i] > 0.0)) fail(ErrorKind::OperatorNotSpd, "slq: non-positive Ritz value");
      quad += eig.first_components[i] * eig.first_components[i] * std::log(eig.values[i]);
    }
    total += z_sq * quad;
  }
  return total / static_cast<double>(cfg.probes);
}

// ---------------------------------------------------------------------------
// Structured kernel interpolation

namespace {

constexpr double kKeysA = -0.5;

// Keys cubic convolution weights for nodes j-1, j, j+1, j+2 at fractional offset t ∈ [0, 1).
std::array<double, 4> keys_weights(double t) noexcept {
  auto near = [](double d) { return ((kKeysA + 2.0) * d - (kKeysA + 3.0)) * d * d + 1.0; };
  auto far = [](double d) { return ((kKeysA * d - 5.0 * kKeysA) * d + 8.0 * kKeysA) * d - 4.0 * kKeysA; };
  return {far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)};
}

}  // namespace

Vector InterpolationWeights::apply(std::span<const double> u) const {
  require(u.size() == cols, ErrorKind::DimensionMismatch, "interpolation: vector length");
  Vector out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) acc += values[k] * u[col_indices[k]];
    out[i] = acc;
  }
  return out;
}

Vector InterpolationWeights::apply_transposed(std::span<const double> v) const {
  require(v.size() == rows, ErrorKind::DimensionMismatch, "interpolation: vector length");
  Vector out(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) out[col_indices[k]] += values[k] * v[i];
  return out;
}

std::size_t circulant_embedding_size(std::size_t m) noexcept { return next_power_of_two(2 * m - 1); }

Vector SkiState::grid_matvec(std::span<const double> u) const {
  require(u.size() == grid_size, ErrorKind::DimensionMismatch, "ski: grid vector length");
  Vector full = circulant.apply(u);
  full.resize(grid_size);
  return full;
}

bool SkiState::covers(double x) const noexcept {
  const double s = (x - grid_lo) / spacing;
  return s >= 1.0 && s < static_cast<double>(grid_size) - 2.0;
}

InterpolationWeights SkiState::interpolate(const Matrix& x) const {
  require(x.cols() == 1, ErrorKind::Unsupported, "ski: inputs must be one-dimensional");
  InterpolationWeights w;
  w.rows = x.rows();
  w.cols = grid_size;
  w.row_offsets.resize(w.rows + 1);
  w.col_indices.resize(4 * w.rows);
  w.values.resize(4 * w.rows);
  const double j_max = static_cast<double>(grid_size) - 3.0;
  for (std::size_t i = 0; i < w.rows; ++i) {
    require(covers(x(i, 0)), ErrorKind::InvalidArgument, "ski: point outside the interpolation grid");
    const double s = (x(i, 0) - grid_lo) / spacing;
    const double j = std::clamp(std::floor(s), 1.0, j_max);
    const auto wt = keys_weights(s - j);
    const auto base = static_cast<std::size_t>(j) - 1;
    w.row_offsets[i] = 4 * i;
    for (std::size_t k = 0; k < 4; ++k) {
      w.col_indices[4 * i + k] = base + k;
      w.values[4 * i + k] = wt[k];
    }
  }
  w.row_offsets[w.rows] = 4 * w.rows;
  return w;
}

SkiState build_ski(const Matrix& x, const KernelExpr& k, std::size_t grid_size) {
  require(x.cols() == 1, ErrorKind::Unsupported, "ski: inputs must be one-dimensional");
  require(x.rows() >= 1, ErrorKind::InvalidArgument, "ski: no data");
  require(grid_size >= 8, ErrorKind::InvalidArgument, "ski: grid needs at least 8 nodes");
  require(k.is_stationary(), ErrorKind::Unsupported, "ski: kernel must be stationary");
  require(all_finite(x.values()), ErrorKind::NonFinite, "ski: non-finite input");

  const auto [lo_it, hi_it] = std::minmax_element(x.values().begin(), x.values().end());
  const double range = *hi_it - *lo_it;
  // Two spacings of margin on both sides keep every 4-point stencil on the grid.
  const double h = range > 0.0 ? range / static_cast<double>(grid_size - 5) : 1.0;

  const std::size_t m = grid_size;
  const std::size_t c = circulant_embedding_size(m);
  Matrix grid(m, 1);
  for (std::size_t j = 0; j < m; ++j) grid(j, 0) = (*lo_it - 2.0 * h) + static_cast<double>(j) * h;
  const Matrix first = kernel_eval(k, grid.row_range(0, 1), grid);

  Vector embed(c, 0.0);
  for (std::size_t j = 0; j < m; ++j) embed[j] = first(0, j);
  for (std::size_t j = 1; j < m; ++j) embed[c - j] = first(0, j);

  SkiState s{*lo_it - 2.0 * h,
             *lo_it - 2.0 * h + static_cast<double>(m - 1) * h,
             m,
             h,
             {},
             to_vector(first.row(0)),
             Circulant(embed),
             k};
  s.weights = s.interpolate(x);
  return s;
}

Vector ski_matvec(const SkiState& s, double noise_variance, std::span<const double> v) {
  require(v.size() == s.weights.rows, ErrorKind::DimensionMismatch, "ski: vector length");
  const Vector u = s.weights.apply_transposed(v);
  const Vector ku = s.grid_matvec(u);
  Vector out = s.weights.apply(ku);
  simd::axpy(noise_variance, v.data(), out.data(), v.size());
  return out;
}

}  // namespace gpc
