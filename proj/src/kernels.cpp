#include "gpc/kernels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>

#include "gpc/linalg.hpp"
#include "gpc/simd.hpp"

namespace gpc {

struct KernelExpr::Node {
  KernelKind kind;
  std::vector<double> params;
  std::vector<KernelExpr> children;
};

namespace {

std::size_t expected_params(KernelKind kind) noexcept {
  switch (kind) {
    case KernelKind::Periodic:
      return 2;
    case KernelKind::Sum:
    case KernelKind::Product:
      return 0;
    default:
      return 1;
  }
}

std::size_t expected_children(KernelKind kind) noexcept {
  switch (kind) {
    case KernelKind::Scale:
      return 1;
    case KernelKind::Sum:
    case KernelKind::Product:
      return 2;
    default:
      return 0;
  }
}

bool is_distance_leaf(KernelKind kind) noexcept {
  return kind == KernelKind::Rbf || kind == KernelKind::Matern12 || kind == KernelKind::Matern32 ||
         kind == KernelKind::Matern52;
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

std::string_view to_string(KernelKind kind) noexcept {
  switch (kind) {
    case KernelKind::Rbf: return "rbf";
    case KernelKind::Matern12: return "matern12";
    case KernelKind::Matern32: return "matern32";
    case KernelKind::Matern52: return "matern52";
    case KernelKind::Periodic: return "periodic";
    case KernelKind::Linear: return "linear";
    case KernelKind::Scale: return "scale";
    case KernelKind::Sum: return "+";
    case KernelKind::Product: return "*";
  }
  return "?";
}

KernelExpr KernelExpr::make(KernelKind kind, std::vector<double> params, std::vector<KernelExpr> children) {
  require(params.size() == expected_params(kind), ErrorKind::InvalidArgument, "kernel: wrong parameter count");
  require(children.size() == expected_children(kind), ErrorKind::InvalidArgument, "kernel: wrong child count");
  for (double p : params) {
    if (!std::isfinite(p)) fail(ErrorKind::NonFinite, "kernel: hyperparameter is not finite");
    if (!(p > 0.0)) fail(ErrorKind::InvalidArgument, "kernel: hyperparameters must be strictly positive");
  }
  for (const auto& c : children) require(c.node_ != nullptr, ErrorKind::InvalidArgument, "kernel: empty child");
  return KernelExpr(std::make_shared<const Node>(Node{kind, std::move(params), std::move(children)}));
}

KernelExpr KernelExpr::rbf(double lengthscale) { return make(KernelKind::Rbf, {lengthscale}, {}); }
KernelExpr KernelExpr::matern12(double lengthscale) { return make(KernelKind::Matern12, {lengthscale}, {}); }
KernelExpr KernelExpr::matern32(double lengthscale) { return make(KernelKind::Matern32, {lengthscale}, {}); }
KernelExpr KernelExpr::matern52(double lengthscale) { return make(KernelKind::Matern52, {lengthscale}, {}); }
KernelExpr KernelExpr::periodic(double lengthscale, double period) {
  return make(KernelKind::Periodic, {lengthscale, period}, {});
}
KernelExpr KernelExpr::linear(double variance) { return make(KernelKind::Linear, {variance}, {}); }
KernelExpr KernelExpr::scale(double outputscale, KernelExpr child) {
  return make(KernelKind::Scale, {outputscale}, {std::move(child)});
}
KernelExpr KernelExpr::sum(KernelExpr left, KernelExpr right) {
  return make(KernelKind::Sum, {}, {std::move(left), std::move(right)});
}
KernelExpr KernelExpr::product(KernelExpr left, KernelExpr right) {
  return make(KernelKind::Product, {}, {std::move(left), std::move(right)});
}

KernelKind KernelExpr::kind() const noexcept { return node_->kind; }
std::span<const double> KernelExpr::params() const noexcept { return node_->params; }
std::size_t KernelExpr::child_count() const noexcept { return node_->children.size(); }

const KernelExpr& KernelExpr::child(std::size_t i) const {
  require(i < node_->children.size(), ErrorKind::InvalidArgument, "kernel: child index out of range");
  return node_->children[i];
}

std::size_t KernelExpr::param_count() const noexcept {
  std::size_t n = node_->params.size();
  for (const auto& c : node_->children) n += c.param_count();
  return n;
}

bool KernelExpr::is_stationary() const noexcept {
  if (node_->kind == KernelKind::Linear) return false;
  return std::all_of(node_->children.begin(), node_->children.end(),
                     [](const KernelExpr& c) { return c.is_stationary(); });
}

KernelExpr KernelExpr::with_params(std::span<const double> params) const {
  return make(node_->kind, std::vector<double>(params.begin(), params.end()), node_->children);
}

KernelExpr KernelExpr::with_children(std::vector<KernelExpr> children) const {
  return make(node_->kind, node_->params, std::move(children));
}

std::string KernelExpr::to_string() const {
  std::string out = "(";
  out += gpc::to_string(node_->kind);
  for (double p : node_->params) out += " " + format_number(p);
  for (const auto& c : node_->children) out += " " + c.to_string();
  out += ")";
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Token {
  std::string_view text;
  std::size_t offset;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) { tokenize(); }

  KernelExpr parse_all() {
    if (tokens_.empty()) fail(ErrorKind::Parse, "empty kernel expression");
    KernelExpr k = parse_expr();
    if (pos_ != tokens_.size()) error_at(tokens_[pos_], "trailing input");
    return k;
  }

 private:
  void tokenize() {
    std::size_t i = 0;
    while (i < src_.size()) {
      const char c = src_[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '(' || c == ')') {
        tokens_.push_back({src_.substr(i, 1), i});
        ++i;
      } else {
        const std::size_t start = i;
        while (i < src_.size() && !std::isspace(static_cast<unsigned char>(src_[i])) && src_[i] != '(' &&
               src_[i] != ')')
          ++i;
        tokens_.push_back({src_.substr(start, i - start), start});
      }
    }
  }

  [[noreturn]] void error_at(const Token& t, const std::string& why) const {
    fail(ErrorKind::Parse, why + " at offset " + std::to_string(t.offset) + ": '" + std::string(t.text) + "'");
  }

  [[noreturn]] void error_eof(const std::string& why) const {
    fail(ErrorKind::Parse, why + " at end of input");
  }

  const Token& next(const char* expecting) {
    if (pos_ >= tokens_.size()) error_eof(std::string("expected ") + expecting);
    return tokens_[pos_++];
  }

  double parse_number() {
    const Token& t = next("number");
    double v = 0.0;
    const char* first = t.text.data();
    const char* last = first + t.text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) error_at(t, "expected number");
    if (!std::isfinite(v) || !(v > 0.0)) error_at(t, "hyperparameter must be positive and finite");
    return v;
  }

  KernelExpr parse_expr() {
    const Token& open = next("'('");
    if (open.text != "(") error_at(open, "expected '('");
    const Token& head = next("kernel name");
    KernelExpr result = [&] {
      const std::string_view h = head.text;
      if (h == "rbf") return KernelExpr::rbf(parse_number());
      if (h == "matern12") return KernelExpr::matern12(parse_number());
      if (h == "matern32") return KernelExpr::matern32(parse_number());
      if (h == "matern52") return KernelExpr::matern52(parse_number());
      if (h == "linear") return KernelExpr::linear(parse_number());
      if (h == "periodic") {
        const double l = parse_number();
        return KernelExpr::periodic(l, parse_number());
      }
      if (h == "scale") {
        const double s = parse_number();
        return KernelExpr::scale(s, parse_expr());
      }
      if (h == "+" || h == "*") {
        KernelExpr a = parse_expr();
        KernelExpr b = parse_expr();
        return h == "+" ? KernelExpr::sum(std::move(a), std::move(b)) : KernelExpr::product(std::move(a), std::move(b));
      }
      error_at(head, "unknown kernel");
    }();
    const Token& close = next("')'");
    if (close.text != ")") error_at(close, "expected ')'");
    return result;
  }

  std::string_view src_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

KernelExpr KernelExpr::parse(std::string_view text) { return Parser(text).parse_all(); }

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct EvalContext {
  const Matrix& x;
  const Matrix& y;
  std::span<const double> y_sqnorms;
  std::size_t distance_leaves;
  std::optional<Matrix> sqdist;

  // The last consumer takes the buffer, so a single-leaf kernel never holds two N×M blocks.
  Matrix take_sqdist() {
    if (!sqdist) sqdist = pairwise_sqdist(x, y, y_sqnorms);
    if (--distance_leaves == 0) {
      Matrix out = std::move(*sqdist);
      sqdist.reset();
      return out;
    }
    return *sqdist;
  }
};

std::size_t count_distance_leaves(const KernelExpr& k) {
  std::size_t n = is_distance_leaf(k.kind()) ? 1 : 0;
  for (std::size_t i = 0; i < k.child_count(); ++i) n += count_distance_leaves(k.child(i));
  return n;
}

void transform_distance(KernelKind kind, double lengthscale, Matrix& m) {
  const std::size_t cols = m.cols();
  Vector scratch(kind == KernelKind::Rbf ? 0 : cols);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = m.row(i).data();
    switch (kind) {
      case KernelKind::Rbf: {
        const double c = -0.5 / (lengthscale * lengthscale);
        for (std::size_t j = 0; j < cols; ++j) row[j] *= c;
        simd::exp_inplace(row, cols);
        break;
      }
      case KernelKind::Matern12: {
        for (std::size_t j = 0; j < cols; ++j) row[j] = -std::sqrt(row[j]) / lengthscale;
        simd::exp_inplace(row, cols);
        break;
      }
      case KernelKind::Matern32: {
        const double c = std::numbers::sqrt3 / lengthscale;
        for (std::size_t j = 0; j < cols; ++j) {
          const double a = c * std::sqrt(row[j]);
          row[j] = 1.0 + a;
          scratch[j] = -a;
        }
        simd::exp_inplace(scratch.data(), cols);
        for (std::size_t j = 0; j < cols; ++j) row[j] *= scratch[j];
        break;
      }
      case KernelKind::Matern52: {
        const double c = std::sqrt(5.0) / lengthscale;
        for (std::size_t j = 0; j < cols; ++j) {
          const double a = c * std::sqrt(row[j]);
          row[j] = 1.0 + a + a * a / 3.0;
          scratch[j] = -a;
        }
        simd::exp_inplace(scratch.data(), cols);
        for (std::size_t j = 0; j < cols; ++j) row[j] *= scratch[j];
        break;
      }
      default:
        break;
    }
  }
}

Matrix eval_periodic(double lengthscale, double period, const Matrix& x, const Matrix& y) {
  Matrix out(x.rows(), y.rows());
  const std::size_t d = x.cols();
  const double w = std::numbers::pi / period;
  const double c = -2.0 / (lengthscale * lengthscale);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i).data();
    double* row = out.row(i).data();
    for (std::size_t j = 0; j < y.rows(); ++j) {
      const double* yj = y.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double sn = std::sin(w * (xi[k] - yj[k]));
        s += sn * sn;
      }
      row[j] = c * s;
    }
    simd::exp_inplace(row, y.rows());
  }
  return out;
}

Matrix eval_node(const KernelExpr& k, EvalContext& ctx) {
  const auto p = k.params();
  switch (k.kind()) {
    case KernelKind::Rbf:
    case KernelKind::Matern12:
    case KernelKind::Matern32:
    case KernelKind::Matern52: {
      Matrix m = ctx.take_sqdist();
      transform_distance(k.kind(), p[0], m);
      return m;
    }
    case KernelKind::Periodic:
      return eval_periodic(p[0], p[1], ctx.x, ctx.y);
    case KernelKind::Linear: {
      Matrix m = matmul(ctx.x, ctx.y, false, true);
      for (double& v : m.values()) v *= p[0];
      return m;
    }
    case KernelKind::Scale: {
      Matrix m = eval_node(k.child(0), ctx);
      for (double& v : m.values()) v *= p[0];
      return m;
    }
    case KernelKind::Sum:
    case KernelKind::Product: {
      Matrix a = eval_node(k.child(0), ctx);
      const Matrix b = eval_node(k.child(1), ctx);
      auto av = a.values();
      auto bv = b.values();
      if (k.kind() == KernelKind::Sum)
        for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
      else
        for (std::size_t i = 0; i < av.size(); ++i) av[i] *= bv[i];
      return a;
    }
  }
  fail(ErrorKind::Unsupported, "kernel: unknown node kind");
}

void diag_node(const KernelExpr& k, const Matrix& x, std::span<double> out) {
  const auto p = k.params();
  switch (k.kind()) {
    case KernelKind::Rbf:
    case KernelKind::Matern12:
    case KernelKind::Matern32:
    case KernelKind::Matern52:
    case KernelKind::Periodic:
      std::fill(out.begin(), out.end(), 1.0);
      return;
    case KernelKind::Linear:
      for (std::size_t i = 0; i < x.rows(); ++i)
        out[i] = p[0] * simd::dot(x.row(i).data(), x.row(i).data(), x.cols());
      return;
    case KernelKind::Scale:
      diag_node(k.child(0), x, out);
      for (double& v : out) v *= p[0];
      return;
    case KernelKind::Sum:
    case KernelKind::Product: {
      diag_node(k.child(0), x, out);
      Vector other(out.size());
      diag_node(k.child(1), x, other);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (k.kind() == KernelKind::Sum)
          out[i] += other[i];
        else
          out[i] *= other[i];
      }
      return;
    }
  }
}

void collect(const KernelExpr& k, std::vector<double>& out) {
  for (double p : k.params()) out.push_back(std::log(p));
  for (std::size_t i = 0; i < k.child_count(); ++i) collect(k.child(i), out);
}

KernelExpr rebuild(const KernelExpr& k, std::span<const double> logs, std::size_t& pos) {
  std::vector<double> params;
  for (double current : k.params()) {
    const double lp = logs[pos++];
    if (!std::isfinite(lp)) fail(ErrorKind::NonFinite, "unflatten: non-finite log-parameter");
    // Keep the template value when the log is unchanged so a flatten/unflatten round trip is bitwise.
    params.push_back(lp == std::log(current) ? current : std::exp(lp));
  }
  std::vector<KernelExpr> children;
  for (std::size_t i = 0; i < k.child_count(); ++i) children.push_back(rebuild(k.child(i), logs, pos));
  return k.with_params(params).with_children(std::move(children));
}

}  // namespace

Matrix kernel_eval(const KernelExpr& k, const Matrix& x, const Matrix& y) {
  require(x.cols() == y.cols(), ErrorKind::DimensionMismatch, "kernel_eval: feature dimension mismatch");
  return kernel_eval(k, x, y, row_sqnorms(y));
}

Matrix kernel_eval(const KernelExpr& k, const Matrix& x, const Matrix& y, std::span<const double> y_sqnorms) {
  require(x.cols() == y.cols(), ErrorKind::DimensionMismatch, "kernel_eval: feature dimension mismatch");
  require(all_finite(x.values()) && all_finite(y.values()), ErrorKind::NonFinite, "kernel_eval: non-finite input");
  return detail::kernel_eval_trusted(k, x, y, y_sqnorms);
}

Matrix detail::kernel_eval_trusted(const KernelExpr& k, const Matrix& x, const Matrix& y,
                                   std::span<const double> y_sqnorms) {
  EvalContext ctx{x, y, y_sqnorms, count_distance_leaves(k), std::nullopt};
  return eval_node(k, ctx);
}

Vector kernel_diag(const KernelExpr& k, const Matrix& x) {
  require(all_finite(x.values()), ErrorKind::NonFinite, "kernel_diag: non-finite input");
  Vector out(x.rows());
  diag_node(k, x, out);
  return out;
}

ParamVector flatten_params(const KernelExpr& k) {
  ParamVector p;
  p.values.reserve(k.param_count());
  collect(k, p.values);
  return p;
}

KernelExpr unflatten_params(const KernelExpr& k, const ParamVector& p) {
  require(p.size() == k.param_count(), ErrorKind::DimensionMismatch, "unflatten: parameter count mismatch");
  std::size_t pos = 0;
  return rebuild(k, p.values, pos);
}

ParamVector flatten_model_params(const KernelExpr& k, double noise_variance) {
  require(noise_variance > 0.0 && std::isfinite(noise_variance), ErrorKind::InvalidArgument,
          "noise variance must be positive");
  ParamVector p = flatten_params(k);
  p.values.push_back(std::log(noise_variance));
  return p;
}

std::pair<KernelExpr, double> unflatten_model_params(const KernelExpr& k, const ParamVector& p) {
  require(p.size() == k.param_count() + 1, ErrorKind::DimensionMismatch, "unflatten: parameter count mismatch");
  ParamVector kp{std::vector<double>(p.values.begin(), p.values.end() - 1)};
  const double log_noise = p.values.back();
  if (!std::isfinite(log_noise)) fail(ErrorKind::NonFinite, "unflatten: non-finite log-noise");
  return {unflatten_params(k, kp), std::exp(log_noise)};
}

}  // namespace gpc
