#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpc/matrix.hpp"

namespace gpc {

enum class KernelKind { Rbf, Matern12, Matern32, Matern52, Periodic, Linear, Scale, Sum, Product };

std::string_view to_string(KernelKind kind) noexcept;

/// Immutable covariance expression tree. Leaves have unit output scale;
/// amplitude comes only from Scale nodes. Copies share structure.
///
/// Text form, one node per parenthesized group:
///   (rbf ℓ) (matern12 ℓ) (matern32 ℓ) (matern52 ℓ) (periodic ℓ p) (linear σv²)
///   (scale s² K) (+ K K) (* K K)
class KernelExpr {
 public:
  static KernelExpr rbf(double lengthscale);
  static KernelExpr matern12(double lengthscale);
  static KernelExpr matern32(double lengthscale);
  static KernelExpr matern52(double lengthscale);
  static KernelExpr periodic(double lengthscale, double period);
  static KernelExpr linear(double variance);
  static KernelExpr scale(double outputscale, KernelExpr child);
  static KernelExpr sum(KernelExpr left, KernelExpr right);
  static KernelExpr product(KernelExpr left, KernelExpr right);

  /// Throws Error{Parse} naming the offending token.
  static KernelExpr parse(std::string_view text);
  /// Shortest round-trip number formatting; parse(to_string()) is exact.
  std::string to_string() const;

  KernelKind kind() const noexcept;
  /// This node's own hyperparameters (natural scale).
  std::span<const double> params() const noexcept;
  std::size_t child_count() const noexcept;
  const KernelExpr& child(std::size_t i) const;

  /// Hyperparameters in the whole tree.
  std::size_t param_count() const noexcept;
  /// True when every leaf depends on x − y only (no Linear leaves).
  bool is_stationary() const noexcept;

  /// Same tree shape with this node's parameters replaced.
  KernelExpr with_params(std::span<const double> params) const;
  KernelExpr with_children(std::vector<KernelExpr> children) const;

 private:
  struct Node;
  explicit KernelExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  static KernelExpr make(KernelKind kind, std::vector<double> params, std::vector<KernelExpr> children);

  std::shared_ptr<const Node> node_;
};

inline KernelExpr operator+(KernelExpr a, KernelExpr b) { return KernelExpr::sum(std::move(a), std::move(b)); }
inline KernelExpr operator*(KernelExpr a, KernelExpr b) { return KernelExpr::product(std::move(a), std::move(b)); }

/// k(xᵢ, yⱼ) for all row pairs.
Matrix kernel_eval(const KernelExpr& k, const Matrix& x, const Matrix& y);
/// As above with precomputed squared row norms of y (reused across slabs).
Matrix kernel_eval(const KernelExpr& k, const Matrix& x, const Matrix& y, std::span<const double> y_sqnorms);
namespace detail {
/// kernel_eval without the dimension/finiteness checks, for callers that validated once.
Matrix kernel_eval_trusted(const KernelExpr& k, const Matrix& x, const Matrix& y, std::span<const double> y_sqnorms);
}  // namespace detail

/// k(xᵢ, xᵢ) in O(N·D).
Vector kernel_diag(const KernelExpr& k, const Matrix& x);

/// Natural-log hyperparameters in pre-order (node first, children left to right).
/// Models append log σₙ² as the last entry.
struct ParamVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) noexcept { return values[i]; }
  double operator[](std::size_t i) const noexcept { return values[i]; }
  bool operator==(const ParamVector&) const = default;
};

ParamVector flatten_params(const KernelExpr& k);
/// Rebuilds `k` with exp(p). Requires p.size() == k.param_count().
KernelExpr unflatten_params(const KernelExpr& k, const ParamVector& p);

/// Kernel parameters followed by log σₙ².
ParamVector flatten_model_params(const KernelExpr& k, double noise_variance);
std::pair<KernelExpr, double> unflatten_model_params(const KernelExpr& k, const ParamVector& p);

}  // namespace gpc
