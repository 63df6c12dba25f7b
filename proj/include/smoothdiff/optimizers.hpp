#pragma once

#include <functional>

#include "smoothdiff/estimators.hpp"
#include "smoothdiff/trace.hpp"

namespace smoothdiff {

/// Linear bandwidth schedule from sigma_start (iter 0) to sigma_end (total_iters).
struct SigmaSchedule {
  double sigma_start = 1.0;
  double sigma_end = 1.0;
  std::uint64_t total_iters = 1;

  void validate() const;
};

/// Clamped beyond total_iters.
double anneal_sigma(const SigmaSchedule& schedule, std::uint64_t iter);

struct TrustRegion {
  double delta = std::numeric_limits<double>::infinity();
  void validate() const;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  Vector theta;
  std::uint64_t iter = 0;
  Vector adam_m;
  Vector adam_v;
  Vector cg_direction;
  Vector cg_residual;

  static OptimizerState at(const Vector& theta);
};

class OptimizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

OptimizerState gd_adam_step(OptimizerState state, const GradientEstimate& grad, double lr,
                            const AdamParams& adam = {});

/// Eigenvalue clamp: every eigenvalue below 1e-6 * max(max|lambda|, 1) is raised to that floor.
Matrix psd_modify(const Matrix& h);

/// theta <- theta + min(1, delta/|v|) v with v = -psd_modify(H)^-1 g.
OptimizerState newton_step(OptimizerState state, const GradientEstimate& grad, const HessianEstimate& hess,
                           const TrustRegion& tr);

/// -g.v / v.Hv
double cg_step_length(const Vector& g, const Vector& v, const Vector& hv);

using GradientProvider = std::function<GradientEstimate(const Vector& theta, double sigma, RngStream& rng)>;
using HessianProvider = std::function<HessianEstimate(const Vector& theta, double sigma, RngStream& rng)>;
using HvpProvider =
    std::function<HvpEstimate(const Vector& theta, const Vector& v, double sigma, RngStream& rng)>;

/// Curvature source for Newton-CG: either an HVP estimator, or an explicit
/// Hessian estimate (PSD-modified, then multiplied with the direction).
struct CurvatureProvider {
  HvpProvider hvp;
  HessianProvider hessian;
};

struct CgStep {
  std::uint64_t outer_iter;
  Vector direction;
  Vector curvature;  // H d
  double alpha;
  bool negative_curvature;
};

struct NewtonCgOptions {
  SigmaSchedule schedule;
  TrustRegion trust_region;
  std::uint64_t ls_iters = 2;
  double ls_tol = 1e-10;
  /// Inner steps between fresh derivative estimates; 0 never refreshes inside an outer iteration.
  std::uint64_t recompute = 0;
  std::function<void(const CgStep&)> on_step;
};

ConvergenceTrace newton_cg_run(RunMonitor& monitor, const GradientProvider& gradient,
                               const CurvatureProvider& curvature, const Vector& init,
                               const NewtonCgOptions& options, RngStream& rng);

struct GdOptions {
  SigmaSchedule schedule;
  double lr = 1e-2;
  AdamParams adam;
};

ConvergenceTrace gd_run(RunMonitor& monitor, const GradientProvider& gradient, const Vector& init,
                        const GdOptions& options, RngStream& rng);

}  // namespace smoothdiff
