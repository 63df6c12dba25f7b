#include "smoothdiff/estimators.hpp"

#include <cmath>
#include <sstream>

namespace smoothdiff {

namespace {

double checked_eval(const Objective& obj, const Vector& point) {
  const double value = obj.evaluate(point);
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "objective returned " << value << " at [" << point.transpose() << "]";
    throw EstimationError(msg.str(), point);
  }
  return value;
}

void require_theta(const Objective& obj, const Vector& theta, const EstimatorConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(theta.size()) != obj.dim())
    throw ContractViolation("theta has length " + std::to_string(theta.size()) + ", objective dimension is " +
                            std::to_string(obj.dim()));
  if (cfg.spec.dim() != obj.dim()) throw ContractViolation("kernel dimension does not match objective dimension");
  if (!theta.allFinite()) throw ContractViolation("theta has non-finite entries");
}

// Even-weight Monte Carlo sum. Each pair contributes weights w_m (one per
// estimated entry) times the pair's mean value s_m. With the baseline on,
// s_m is replaced by s_m - b_m where b_m is the mean of the other pairs.
class EvenAccumulator {
 public:
  explicit EvenAccumulator(Eigen::Index size) : weighted_(Eigen::ArrayXd::Zero(size)), weights_(Eigen::ArrayXd::Zero(size)) {}

  template <typename Derived>
  void add(const Eigen::ArrayBase<Derived>& w, double value) {
    weighted_ += value * w;
    weights_ += w;
    value_sum_ += value;
    ++count_;
  }

  Eigen::ArrayXd result(bool baseline) const {
    const double m = static_cast<double>(count_);
    if (!baseline || count_ < 2) return weighted_ / m;
    // sum_m w_m b_m = (S W - sum_m w_m s_m) / (M - 1)
    return (weighted_ - (value_sum_ * weights_ - weighted_) / (m - 1.0)) / m;
  }

 private:
  Eigen::ArrayXd weighted_;
  Eigen::ArrayXd weights_;
  double value_sum_ = 0.0;
  std::size_t count_ = 0;
};

struct PairValues {
  double minus;  // f(theta - tau)
  double plus;   // f(theta + tau)
  double odd() const { return 0.5 * (minus - plus); }
  double even() const { return 0.5 * (minus + plus); }
};

PairValues eval_pair(const Objective& obj, const Vector& theta, const Vector& tau) {
  return {checked_eval(obj, theta - tau), checked_eval(obj, theta + tau)};
}

OffsetSample draw_full(SamplingMode mode, const EstimatorConfig& cfg, RngStream& rng) {
  if (mode == SamplingMode::Uniform) return sample_uniform_offset(cfg.spec, rng);
  return sample_hessian_mixture_offset(cfg.spec, cfg.diag_table(), rng);
}

// HVP kernel over N(s), all coordinates. delta is the shift vector e*v/|v|
// and scale = 1 / (2 e / |v|).
Vector hvp_kernel_ratio(const Vector& s, const Vector& delta, double scale, double sigma) {
  const double s2 = sigma * sigma;
  const double a = s.dot(delta);
  const double q = delta.squaredNorm();
  const double e_plus = std::exp(-(2.0 * a + q) / (2.0 * s2));
  const double e_minus = std::exp(-(-2.0 * a + q) / (2.0 * s2));
  return scale / s2 * ((s - delta) * e_minus - (s + delta) * e_plus);
}

double hvp_kernel_ratio_at(const Vector& s, const Vector& delta, double scale, double sigma, Eigen::Index i) {
  const double s2 = sigma * sigma;
  const double a = s.dot(delta);
  const double q = delta.squaredNorm();
  const double e_plus = std::exp(-(2.0 * a + q) / (2.0 * s2));
  const double e_minus = std::exp(-(-2.0 * a + q) / (2.0 * s2));
  return scale / s2 * ((s[i] - delta[i]) * e_minus - (s[i] + delta[i]) * e_plus);
}

}  // namespace

std::string to_string(SamplingMode mode) {
  switch (mode) {
    case SamplingMode::PerElementIS:
      return "per_element";
    case SamplingMode::AggregateIS:
      return "aggregate";
    case SamplingMode::Uniform:
      return "uniform";
  }
  return "unknown";
}

SamplingMode parse_sampling_mode(const std::string& name) {
  if (name == "per_element" || name == "PerElementIS") return SamplingMode::PerElementIS;
  if (name == "aggregate" || name == "AggregateIS") return SamplingMode::AggregateIS;
  if (name == "uniform" || name == "Uniform") return SamplingMode::Uniform;
  throw ContractViolation("unknown sampling mode '" + name + "'");
}

Objective::Objective(std::size_t dim, Function fn)
    : dim_(dim), fn_(std::move(fn)), counter_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
  if (dim == 0) throw ContractViolation("objective dimension must be at least 1");
  if (!fn_) throw ContractViolation("objective needs a callable");
}

double Objective::evaluate(const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dim_)
    throw ContractViolation("objective called with length " + std::to_string(theta.size()) + ", expected " +
                            std::to_string(dim_));
  counter_->fetch_add(1, std::memory_order_relaxed);
  return fn_(theta);
}

EstimatorConfig::EstimatorConfig(KernelSpec spec_in, std::size_t samples_in, SamplingMode mode_in)
    : spec(spec_in), samples(samples_in), hvp_epsilon(1e-2 * spec_in.sigma()), mode(mode_in) {}

void EstimatorConfig::validate() const {
  if (samples < 1) throw ContractViolation("estimator needs at least one antithetic pair");
  if (!(hvp_epsilon > 0.0) || !std::isfinite(hvp_epsilon)) throw ContractViolation("hvp_epsilon must be positive");
}

std::uint64_t gradient_evals_per_pair(SamplingMode mode, std::size_t dim) {
  return mode == SamplingMode::PerElementIS ? 2 * dim : 2;
}

std::uint64_t hessian_evals_per_pair(SamplingMode mode, std::size_t dim) {
  return mode == SamplingMode::PerElementIS ? dim * (dim + 1) : 2;
}

std::uint64_t hvp_evals_per_pair(SamplingMode mode, std::size_t dim) {
  return mode == SamplingMode::PerElementIS ? 2 * dim : 2;
}

GradientEstimate estimate_gradient(const Objective& obj, const Vector& theta, const EstimatorConfig& cfg,
                                   RngStream& rng) {
  require_theta(obj, theta, cfg);
  const auto n = theta.size();
  const double s2 = cfg.spec.sigma() * cfg.spec.sigma();
  const double m = static_cast<double>(cfg.samples);
  GradientEstimate out{Vector::Zero(n), 0};

  if (cfg.mode == SamplingMode::PerElementIS) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < cfg.samples; ++k) {
        const auto sample = sample_gradient_offset(static_cast<std::size_t>(i), cfg.spec, rng);
        const double w = -sample.tau[i] / s2 / sample.density_ratio;
        out.g[i] += w * eval_pair(obj, theta, sample.tau).odd();
      }
    }
  } else {
    const ElementMixture mixture(gradient_elements(static_cast<std::size_t>(n)), cfg.spec);
    for (std::size_t k = 0; k < cfg.samples; ++k) {
      const auto sample = cfg.mode == SamplingMode::Uniform ? sample_uniform_offset(cfg.spec, rng)
                                                            : mixture.sample(cfg.diag_table(), rng);
      const double odd = eval_pair(obj, theta, sample.tau).odd();
      out.g += (-odd / (s2 * sample.density_ratio)) * sample.tau;
    }
  }
  out.g /= m;
  out.evals_used = gradient_evals_per_pair(cfg.mode, static_cast<std::size_t>(n)) * cfg.samples;
  return out;
}

GradientEstimate estimate_gradient_fr22(const Objective& obj, const Vector& theta, const EstimatorConfig& cfg,
                                        RngStream& rng) {
  require_theta(obj, theta, cfg);
  const auto n = theta.size();
  const double sigma = cfg.spec.sigma();
  GradientEstimate out{Vector::Zero(n), 0};
  Vector tau = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < cfg.samples; ++k) {
      const double u = gradient_inverse_cdf(rng.uniform(), sigma);
      tau[i] = u;
      const double w = axis_blur_gradient_kernel(u, sigma) / gradient_pdf(u, sigma);
      out.g[i] += w * eval_pair(obj, theta, tau).odd();
    }
    tau[i] = 0.0;
  }
  out.g /= static_cast<double>(cfg.samples);
  out.evals_used = 2 * static_cast<std::uint64_t>(n) * cfg.samples;
  return out;
}

GradientEstimate estimate_gradient_fd(const Objective& obj, const Vector& theta, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ContractViolation("finite-difference step must be positive");
  if (static_cast<std::size_t>(theta.size()) != obj.dim()) throw ContractViolation("theta length mismatch");
  const auto n = theta.size();
  GradientEstimate out{Vector::Zero(n), 0};
  Vector x = theta;
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = theta[i] + step;
    const double fp = checked_eval(obj, x);
    x[i] = theta[i] - step;
    const double fm = checked_eval(obj, x);
    x[i] = theta[i];
    out.g[i] = (fp - fm) / (2.0 * step);
  }
  out.evals_used = 2 * static_cast<std::uint64_t>(n);
  return out;
}

HessianEstimate estimate_hessian(const Objective& obj, const Vector& theta, const EstimatorConfig& cfg,
                                 RngStream& rng) {
  require_theta(obj, theta, cfg);
  const auto n = theta.size();
  const double s2 = cfg.spec.sigma() * cfg.spec.sigma();
  HessianEstimate out{Matrix::Zero(n, n), 0};

  if (cfg.mode == SamplingMode::PerElementIS) {
    for (const auto& elem : hessian_elements(static_cast<std::size_t>(n))) {
      EvenAccumulator acc(1);
      for (std::size_t k = 0; k < cfg.samples; ++k) {
        const auto sample = sample_hessian_offset(elem, cfg.spec, cfg.diag_table(), rng);
        const double w = kernel_over_gaussian(sample.tau, elem, cfg.spec) / sample.density_ratio;
        acc.add(Eigen::ArrayXd::Constant(1, w), eval_pair(obj, theta, sample.tau).even());
      }
      out.h(static_cast<Eigen::Index>(elem.i), static_cast<Eigen::Index>(elem.j)) = acc.result(cfg.control_variate)[0];
    }
  } else {
    EvenAccumulator acc(n * n);
    Matrix w(n, n);
    for (std::size_t k = 0; k < cfg.samples; ++k) {
      const auto sample = draw_full(cfg.mode, cfg, rng);
      // (tau tau^T / s^4 - I / s^2) / ratio
      w.noalias() = sample.tau * sample.tau.transpose() / (s2 * s2);
      w.diagonal().array() -= 1.0 / s2;
      w /= sample.density_ratio;
      acc.add(w.reshaped().array(), eval_pair(obj, theta, sample.tau).even());
    }
    out.h = acc.result(cfg.control_variate).matrix().reshaped(n, n);
  }
  // Mirror the upper triangle so the result is exactly symmetric.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out.h(j, i) = out.h(i, j);
  out.evals_used = hessian_evals_per_pair(cfg.mode, static_cast<std::size_t>(n)) * cfg.samples;
  return out;
}

HvpEstimate estimate_hvp(const Objective& obj, const Vector& theta, const Vector& v, const EstimatorConfig& cfg,
                         RngStream& rng) {
  require_theta(obj, theta, cfg);
  const auto n = theta.size();
  if (v.size() != n) throw ContractViolation("HVP direction length mismatch");
  const double v_norm = v.norm();
  if (!(v_norm > 0.0) || !std::isfinite(v_norm)) throw ContractViolation("HVP direction must be nonzero and finite");
  const double sigma = cfg.spec.sigma();
  const Vector delta = (cfg.hvp_epsilon / v_norm) * v;
  const double scale = v_norm / (2.0 * cfg.hvp_epsilon);
  HvpEstimate out{Vector::Zero(n), v, 0};

  if (cfg.mode == SamplingMode::PerElementIS) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const ElementMixture row(hessian_row_elements(static_cast<std::size_t>(i), static_cast<std::size_t>(n)),
                               cfg.spec);
      EvenAccumulator acc(1);
      for (std::size_t k = 0; k < cfg.samples; ++k) {
        const auto sample = row.sample(cfg.diag_table(), rng);
        const double w = hvp_kernel_ratio_at(sample.tau, delta, scale, sigma, i) / sample.density_ratio;
        acc.add(Eigen::ArrayXd::Constant(1, w), eval_pair(obj, theta, sample.tau).even());
      }
      out.hv[i] = acc.result(cfg.control_variate)[0];
    }
  } else {
    EvenAccumulator acc(n);
    for (std::size_t k = 0; k < cfg.samples; ++k) {
      const auto sample = draw_full(cfg.mode, cfg, rng);
      const Vector w = hvp_kernel_ratio(sample.tau, delta, scale, sigma) / sample.density_ratio;
      acc.add(w.array(), eval_pair(obj, theta, sample.tau).even());
    }
    out.hv = acc.result(cfg.control_variate).matrix();
  }
  out.evals_used = hvp_evals_per_pair(cfg.mode, static_cast<std::size_t>(n)) * cfg.samples;
  return out;
}

GradientEstimate greybox_gradient(const Matrix& inner_jacobian, const GradientEstimate& outer_grad) {
  if (inner_jacobian.rows() != outer_grad.g.size())
    throw ContractViolation("Jacobian has " + std::to_string(inner_jacobian.rows()) + " rows, outer gradient has " +
                            std::to_string(outer_grad.g.size()) + " entries");
  return {inner_jacobian.transpose() * outer_grad.g, outer_grad.evals_used};
}

HessianEstimate greybox_hessian(const Matrix& inner_jacobian, const HessianEstimate& outer_hess) {
  if (outer_hess.h.rows() != outer_hess.h.cols() || inner_jacobian.rows() != outer_hess.h.rows())
    throw ContractViolation("Jacobian rows must match the outer Hessian size");
  Matrix h = inner_jacobian.transpose() * outer_hess.h * inner_jacobian;
  const Matrix sym = 0.5 * (h + h.transpose());
  return {sym, outer_hess.evals_used};
}

}  // namespace smoothdiff
