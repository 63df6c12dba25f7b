#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

#include "smoothdiff/kernels.hpp"
#include "smoothdiff/rng.hpp"
#include "smoothdiff/samplers.hpp"

namespace smoothdiff {

enum class SamplingMode { PerElementIS, AggregateIS, Uniform };

std::string to_string(SamplingMode mode);
SamplingMode parse_sampling_mode(const std::string& name);

/// Thrown when the objective returns a non-finite value.
class EstimationError : public std::runtime_error {
 public:
  EstimationError(const std::string& what, Vector point) : std::runtime_error(what), point_(std::move(point)) {}
  /// Parameter vector at which the objective misbehaved.
  const Vector& point() const { return point_; }

 private:
  Vector point_;
};

/// Black-box scalar objective with an evaluation counter.
/// The wrapped function must tolerate concurrent calls if the objective is
/// shared between threads; the counter itself is atomic.
class Objective {
 public:
  using Function = std::function<double(const Vector&)>;

  Objective(std::size_t dim, Function fn);
  Objective(Objective&&) noexcept = default;
  Objective& operator=(Objective&&) noexcept = default;

  std::size_t dim() const { return dim_; }
  double evaluate(const Vector& theta) const;
  double operator()(const Vector& theta) const { return evaluate(theta); }
  std::uint64_t eval_count() const { return counter_->load(std::memory_order_relaxed); }

 private:
  std::size_t dim_;
  Function fn_;
  std::unique_ptr<std::atomic<std::uint64_t>> counter_;
};

struct EstimatorConfig {
  explicit EstimatorConfig(KernelSpec spec, std::size_t samples = 1, SamplingMode mode = SamplingMode::AggregateIS);

  KernelSpec spec;
  /// Number of antithetic pairs M.
  std::size_t samples;
  /// Length of the HVP shift along the unit direction. Defaults to 1e-2 sigma.
  double hvp_epsilon;
  SamplingMode mode;
  /// Leave-one-out baseline for even-weight estimators (Hessian, HVP).
  /// Unbiased since every weight has zero mean; needs samples >= 2 to act.
  bool control_variate = true;
  /// Hessian-diagonal inverse table; null selects the shared default.
  const TabulatedInverseCdf* table = nullptr;

  void validate() const;
  const TabulatedInverseCdf& diag_table() const { return table ? *table : default_hessian_diag_table(); }
};

struct GradientEstimate {
  Vector g;
  std::uint64_t evals_used = 0;
};

struct HessianEstimate {
  Matrix h;
  std::uint64_t evals_used = 0;
};

struct HvpEstimate {
  Vector hv;
  Vector direction;
  std::uint64_t evals_used = 0;
};

/// Objective evaluations one antithetic pair costs.
std::uint64_t gradient_evals_per_pair(SamplingMode mode, std::size_t dim);
std::uint64_t hessian_evals_per_pair(SamplingMode mode, std::size_t dim);
std::uint64_t hvp_evals_per_pair(SamplingMode mode, std::size_t dim);

GradientEstimate estimate_gradient(const Objective& obj, const Vector& theta, const EstimatorConfig& cfg,
                                   RngStream& rng);

/// Baseline that perturbs only the differentiated coordinate.
GradientEstimate estimate_gradient_fr22(const Objective& obj, const Vector& theta, const EstimatorConfig& cfg,
                                        RngStream& rng);

GradientEstimate estimate_gradient_fd(const Objective& obj, const Vector& theta, double step);

HessianEstimate estimate_hessian(const Objective& obj, const Vector& theta, const EstimatorConfig& cfg,
                                 RngStream& rng);

/// Central difference of the smoothed gradient along v. The two shifted
/// gradient estimators share their evaluation points, so the difference is
/// taken on the kernel: [grad N(s + e u) - grad N(s - e u)] / (2 e / |v|)
/// with u = v / |v| and e = cfg.hvp_epsilon.
HvpEstimate estimate_hvp(const Objective& obj, const Vector& theta, const Vector& v, const EstimatorConfig& cfg,
                         RngStream& rng);

/// J^T g for an inner map with Jacobian J (n_out x n_in).
GradientEstimate greybox_gradient(const Matrix& inner_jacobian, const GradientEstimate& outer_grad);

/// J^T H J.
HessianEstimate greybox_hessian(const Matrix& inner_jacobian, const HessianEstimate& outer_hess);

}  // namespace smoothdiff
