#include <cmath>
#include <limits>

#include "gpc/models.hpp"

namespace gpc {

void OptimizerConfig::validate() const {
  require(learning_rate > 0.0 && fd_epsilon > 0.0 && epsilon > 0.0, ErrorKind::InvalidArgument,
          "optimizer: step sizes must be positive");
  require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, ErrorKind::InvalidArgument,
          "optimizer: Adam decay rates must lie in (0, 1)");
}

OptimizeResult optimize_hyperparams(const std::function<double(const ParamVector&)>& objective, ParamVector p0,
                                    const OptimizerConfig& opt) {
  opt.validate();
  const std::size_t dim = p0.size();
  OptimizeResult res;
  res.best = p0;
  res.best_value = std::numeric_limits<double>::quiet_NaN();

  std::vector<double> m(dim, 0.0);
  std::vector<double> v(dim, 0.0);
  std::vector<double> grad(dim, 0.0);
  ParamVector p = std::move(p0);
  double b1_pow = 1.0;
  double b2_pow = 1.0;

  auto eval = [&](const ParamVector& at, double& out) {
    out = objective(at);
    ++res.evaluations;
    return std::isfinite(out);
  };

  for (std::size_t step = 0; step < opt.steps; ++step) {
    double f0 = 0.0;
    if (!eval(p, f0)) {
      res.aborted = true;
      break;
    }
    res.trace.push_back(f0);
    if (!(f0 <= res.best_value)) {  // also true while best_value is NaN
      res.best_value = f0;
      res.best = p;
    }

    bool ok = true;
    for (std::size_t i = 0; i < dim && ok; ++i) {
      ParamVector probe = p;
      double f_plus = 0.0;
      double f_minus = 0.0;
      probe[i] = p[i] + opt.fd_epsilon;
      ok = eval(probe, f_plus);
      if (!ok) break;
      probe[i] = p[i] - opt.fd_epsilon;
      ok = eval(probe, f_minus);
      grad[i] = (f_plus - f_minus) / (2.0 * opt.fd_epsilon);
    }
    if (!ok) {
      res.aborted = true;
      break;
    }

    b1_pow *= opt.beta1;
    b2_pow *= opt.beta2;
    for (std::size_t i = 0; i < dim; ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grad[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / (1.0 - b1_pow);
      const double v_hat = v[i] / (1.0 - b2_pow);
      p[i] += opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
    ++res.steps_taken;
  }
  return res;
}

}  // namespace gpc
