#include "smoothdiff/optimizers.hpp"

#include <chrono>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace smoothdiff {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void require_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) throw OptimizationError(std::string("non-finite ") + what);
}

}  // namespace

RunMonitor::RunMonitor(const Objective& obj, Objective::Function monitor_loss, Vector theta_true, Budget budget,
                       std::optional<double> virtual_seconds_per_eval)
    : obj_(obj),
      loss_(std::move(monitor_loss)),
      theta_true_(std::move(theta_true)),
      budget_(budget),
      virtual_cost_(virtual_seconds_per_eval),
      start_evals_(obj.eval_count()),
      start_time_(now_seconds()) {
  if (!loss_) throw ContractViolation("monitor needs a loss function");
  if (static_cast<std::size_t>(theta_true_.size()) != obj.dim())
    throw ContractViolation("theta_true length does not match objective dimension");
}

std::uint64_t RunMonitor::evals() const { return obj_.eval_count() - start_evals_; }

double RunMonitor::elapsed_seconds() const {
  if (virtual_cost_) return *virtual_cost_ * static_cast<double>(evals());
  return now_seconds() - start_time_;
}

void RunMonitor::record(std::uint64_t iter, const Vector& theta) {
  TraceRecord r;
  r.wall_time_s = elapsed_seconds();
  r.iter = iter;
  r.evals = evals();
  r.loss = loss_(theta);
  r.param_error = (theta - theta_true_).norm();
  if (!trace_.records.empty()) {
    // Keep time nondecreasing even if the steady clock stalls.
    r.wall_time_s = std::max(r.wall_time_s, trace_.records.back().wall_time_s);
  }
  trace_.records.push_back(r);
}

bool RunMonitor::exhausted(std::uint64_t iter) const {
  return iter >= budget_.max_iters || evals() >= budget_.evals || elapsed_seconds() >= budget_.seconds;
}

void SigmaSchedule::validate() const {
  if (!(sigma_start > 0.0) || !(sigma_end > 0.0) || !std::isfinite(sigma_start) || !std::isfinite(sigma_end))
    throw ContractViolation("sigma schedule endpoints must be positive and finite");
  if (total_iters == 0) throw ContractViolation("sigma schedule needs total_iters >= 1");
}

double anneal_sigma(const SigmaSchedule& schedule, std::uint64_t iter) {
  schedule.validate();
  if (iter >= schedule.total_iters) return schedule.sigma_end;
  const double t = static_cast<double>(iter) / static_cast<double>(schedule.total_iters);
  return schedule.sigma_start + t * (schedule.sigma_end - schedule.sigma_start);
}

void TrustRegion::validate() const {
  if (!(delta > 0.0)) throw ContractViolation("trust region radius must be positive");
}

OptimizerState OptimizerState::at(const Vector& theta) {
  OptimizerState s;
  s.theta = theta;
  s.adam_m = Vector::Zero(theta.size());
  s.adam_v = Vector::Zero(theta.size());
  s.cg_direction = Vector::Zero(theta.size());
  s.cg_residual = Vector::Zero(theta.size());
  return s;
}

OptimizerState gd_adam_step(OptimizerState state, const GradientEstimate& grad, double lr, const AdamParams& adam) {
  if (!(lr > 0.0)) throw ContractViolation("learning rate must be positive");
  if (grad.g.size() != state.theta.size()) throw ContractViolation("gradient length mismatch");
  require_finite(grad.g, "gradient");
  if (state.adam_m.size() != state.theta.size()) state.adam_m = Vector::Zero(state.theta.size());
  if (state.adam_v.size() != state.theta.size()) state.adam_v = Vector::Zero(state.theta.size());
  ++state.iter;
  const double t = static_cast<double>(state.iter);
  state.adam_m = adam.beta1 * state.adam_m + (1.0 - adam.beta1) * grad.g;
  state.adam_v = adam.beta2 * state.adam_v + (1.0 - adam.beta2) * grad.g.cwiseProduct(grad.g);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  const Vector m_hat = state.adam_m / c1;
  const Vector v_hat = state.adam_v / c2;
  state.theta.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + adam.epsilon);
  return state;
}

Matrix psd_modify(const Matrix& h) {
  if (h.rows() != h.cols()) throw ContractViolation("Hessian must be square");
  if (!h.allFinite()) throw OptimizationError("non-finite Hessian");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  if (eig.info() != Eigen::Success) throw OptimizationError("eigendecomposition failed");
  Vector lambda = eig.eigenvalues();
  const double floor = 1e-6 * std::max(lambda.cwiseAbs().maxCoeff(), 1.0);
  lambda = lambda.cwiseMax(floor);
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

OptimizerState newton_step(OptimizerState state, const GradientEstimate& grad, const HessianEstimate& hess,
                           const TrustRegion& tr) {
  tr.validate();
  const auto n = state.theta.size();
  if (grad.g.size() != n || hess.h.rows() != n || hess.h.cols() != n)
    throw ContractViolation("Newton step shape mismatch");
  require_finite(grad.g, "gradient");
  const Matrix modified = psd_modify(hess.h);
  const Vector v = -modified.ldlt().solve(grad.g);
  require_finite(v, "Newton direction");
  const double len = v.norm();
  const double scale = len > tr.delta ? tr.delta / len : 1.0;
  state.theta += scale * v;
  ++state.iter;
  return state;
}

double cg_step_length(const Vector& g, const Vector& v, const Vector& hv) { return -g.dot(v) / v.dot(hv); }

ConvergenceTrace newton_cg_run(RunMonitor& monitor, const GradientProvider& gradient,
                               const CurvatureProvider& curvature, const Vector& init,
                               const NewtonCgOptions& options, RngStream& rng) {
  options.schedule.validate();
  options.trust_region.validate();
  if (!gradient) throw ContractViolation("Newton-CG needs a gradient provider");
  if (!curvature.hvp && !curvature.hessian) throw ContractViolation("Newton-CG needs an HVP or Hessian provider");
  if (options.ls_iters == 0) throw ContractViolation("ls_iters must be at least 1");
  const double delta = options.trust_region.delta;

  OptimizerState state = OptimizerState::at(init);
  monitor.record(0, state.theta);
  std::uint64_t inner_total = 0;
  try {
    while (!monitor.exhausted(state.iter)) {
      const double sigma = anneal_sigma(options.schedule, state.iter);
      Matrix h_mod;
      // Fresh derivatives at the current point; restarts CG from steepest descent.
      auto refresh = [&]() {
        const Vector g = gradient(state.theta, sigma, rng).g;
        require_finite(g, "gradient");
        if (!curvature.hvp) h_mod = psd_modify(curvature.hessian(state.theta, sigma, rng).h);
        state.cg_residual = -g;
        state.cg_direction = state.cg_residual;
      };
      refresh();
      for (std::uint64_t k = 0; k < options.ls_iters; ++k) {
        Vector& r = state.cg_residual;
        Vector& d = state.cg_direction;
        if (r.norm() <= options.ls_tol || monitor.exhausted(state.iter)) break;
        Vector hd = curvature.hvp ? curvature.hvp(state.theta, d, sigma, rng).hv : Vector(h_mod * d);
        require_finite(hd, "curvature product");
        const double dhd = d.dot(hd);
        bool negative = false;
        double alpha;
        if (!(dhd > 0.0)) {
          // No usable curvature along d: step along the residual, sized by
          // the magnitude of the measured curvature and capped by delta.
          negative = true;
          const double kappa = std::abs(dhd) / d.squaredNorm();
          d = r;
          const double cap = std::isfinite(delta) ? delta : 1.0;
          alpha = (kappa > 0.0 ? std::min(cap, d.norm() / kappa) : cap) / d.norm();
        } else {
          alpha = std::min(r.dot(d) / dhd, delta / d.norm());
        }
        if (options.on_step) options.on_step({state.iter, d, hd, alpha, negative});
        state.theta += alpha * d;
        require_finite(state.theta, "parameters");
        ++inner_total;
        const bool last = k + 1 == options.ls_iters;
        if (negative || (options.recompute > 0 && inner_total % options.recompute == 0)) {
          if (!last && !monitor.exhausted(state.iter)) refresh();
          continue;
        }
        const Vector r_next = r - alpha * hd;
        const double beta = r_next.squaredNorm() / r.squaredNorm();
        d = r_next + beta * d;
        r = r_next;
      }
      ++state.iter;
      monitor.record(state.iter, state.theta);
    }
  } catch (const OptimizationError& e) {
    monitor.abort(e.what());
  } catch (const EstimationError& e) {
    monitor.abort(e.what());
  }
  return monitor.take_trace();
}

ConvergenceTrace gd_run(RunMonitor& monitor, const GradientProvider& gradient, const Vector& init,
                        const GdOptions& options, RngStream& rng) {
  options.schedule.validate();
  if (!gradient) throw ContractViolation("gradient descent needs a gradient provider");
  OptimizerState state = OptimizerState::at(init);
  monitor.record(0, state.theta);
  try {
    while (!monitor.exhausted(state.iter)) {
      const double sigma = anneal_sigma(options.schedule, state.iter);
      const GradientEstimate grad = gradient(state.theta, sigma, rng);
      state = gd_adam_step(std::move(state), grad, options.lr, options.adam);
      require_finite(state.theta, "parameters");
      monitor.record(state.iter, state.theta);
    }
  } catch (const OptimizationError& e) {
    monitor.abort(e.what());
  } catch (const EstimationError& e) {
    monitor.abort(e.what());
  }
  return monitor.take_trace();
}

}  // namespace smoothdiff
