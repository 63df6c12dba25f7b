#include <cmath>

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "smoothdiff/optimizers.hpp"
#include "smoothdiff/tasks.hpp"

using namespace smoothdiff;

namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Matrix quad_h() {
  Matrix h(2, 2);
  h << 10.0, 7.5, 7.5, 10.0;
  return h;
}

// Symmetric positive definite 5x5 with a spread spectrum.
Matrix spd5() {
  Matrix q = Matrix::Zero(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) q(i, j) = std::cos(1.0 + i * 1.7 + j * 0.9);
  Eigen::HouseholderQR<Matrix> qr(q);
  const Matrix o = qr.householderQ();
  Vector ev(5);
  ev << 0.5, 1.0, 3.0, 8.0, 20.0;
  return o * ev.asDiagonal() * o.transpose();
}

struct ExactQuadratic {
  Matrix h;
  Vector b;
  Objective obj;
  explicit ExactQuadratic(Matrix hm) : h(hm), b(Vector::LinSpaced(hm.rows(), -1.0, 1.0)), obj(make(h, b)) {}
  static Objective make(const Matrix& h, const Vector& b) {
    return Objective(static_cast<std::size_t>(h.rows()),
                     [h, b](const Vector& x) { return 0.5 * x.dot(h * x) - b.dot(x); });
  }
  GradientProvider gradient() const {
    return [this](const Vector& x, double, RngStream&) { return GradientEstimate{h * x - b, 0}; };
  }
  CurvatureProvider hvp() const {
    return {[this](const Vector&, const Vector& v, double, RngStream&) { return HvpEstimate{h * v, v, 0}; }, {}};
  }
  Vector solution() const { return h.ldlt().solve(b); }
};

}  // namespace

TEST_CASE("anneal_sigma is linear and clamped") {
  const SigmaSchedule s{2.0, 0.5, 10};
  CHECK(anneal_sigma(s, 0) == 2.0);
  CHECK(anneal_sigma(s, 10) == 0.5);
  CHECK(anneal_sigma(s, 5) == doctest::Approx(1.25));
  CHECK(anneal_sigma(s, 50) == 0.5);
  CHECK_THROWS_AS((SigmaSchedule{0.0, 0.5, 10}).validate(), ContractViolation);
  CHECK_THROWS_AS((SigmaSchedule{1.0, 0.5, 0}).validate(), ContractViolation);
}

TEST_CASE("Adam step") {
  OptimizerState st = OptimizerState::at(v2(1.0, -1.0));
  const OptimizerState same = gd_adam_step(st, {Vector::Zero(2), 0}, 0.1);
  CHECK(same.theta == st.theta);
  CHECK(same.iter == 1);
  // First bias-corrected Adam step moves every coordinate by lr against the sign.
  const OptimizerState moved = gd_adam_step(st, {v2(3.0, -0.01), 0}, 0.1);
  CHECK(moved.theta[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(moved.theta[1] == doctest::Approx(-0.9).epsilon(1e-6));
  CHECK_THROWS_AS(gd_adam_step(st, {Vector::Zero(3), 0}, 0.1), ContractViolation);
  CHECK_THROWS_AS(gd_adam_step(st, {Vector::Zero(2), 0}, -0.1), ContractViolation);
}

TEST_CASE("Adam with exact gradients decreases Quad monotonically") {
  const Task quad = quad_task();
  OptimizerState st = OptimizerState::at(v2(2.0, -1.0));
  double prev = quad.function(st.theta);
  for (int k = 0; k < 50; ++k) {
    st = gd_adam_step(std::move(st), {quad.analytic_grad(st.theta), 0}, 0.5 / (1.0 + k));
    const double now = quad.function(st.theta);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("psd_modify") {
  Matrix h(2, 2);
  h << 1.0, 0.0, 0.0, -2.0;
  const Matrix m = psd_modify(h);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  CHECK(es.eigenvalues().minCoeff() == doctest::Approx(2e-6));
  CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(1.0));
  CHECK(psd_modify(quad_h()).isApprox(quad_h(), 1e-14));
  CHECK_THROWS_AS(psd_modify(Matrix::Zero(2, 3)), ContractViolation);
}

TEST_CASE("exact Newton step solves Quad") {
  const Task quad = quad_task();
  for (const Vector& start : {v2(1.0, 1.0), v2(-2.5, 0.7), v2(100.0, -40.0)}) {
    const auto st = newton_step(OptimizerState::at(start), {quad.analytic_grad(start), 0},
                                {quad.analytic_hess(start), 0}, TrustRegion{});
    CHECK(st.theta.norm() <= 1e-10);
  }
}

TEST_CASE("Newton step on a non-PSD Hessian descends") {
  const Vector g = v2(0.3, -1.2);
  const auto st = newton_step(OptimizerState::at(Vector::Zero(2)), {g, 0}, {-Matrix::Identity(2, 2), 0}, TrustRegion{0.1});
  CHECK(st.theta.dot(-g) > 0.0);
}

TEST_CASE("trust region caps the step at delta") {
  const Task quad = quad_task();
  const Vector start = v2(3.0, -2.0);
  const auto st = newton_step(OptimizerState::at(start), {quad.analytic_grad(start), 0}, {quad.analytic_hess(start), 0},
                              TrustRegion{0.25});
  CHECK((st.theta - start).norm() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS((TrustRegion{0.0}).validate(), ContractViolation);
}

TEST_CASE("CG step length hand check") {
  const Vector g = v2(17.5, 17.5);
  const Vector v = -g;
  const double alpha = cg_step_length(g, v, quad_h() * v);
  CHECK(std::abs(alpha - 1.0 / 17.5) <= 1e-12);
}

TEST_CASE("Fletcher-Reeves directions are conjugate") {
  const ExactQuadratic q(spd5());
  std::vector<CgStep> steps;
  NewtonCgOptions opt;
  opt.schedule = {1.0, 1.0, 1};
  opt.ls_iters = 5;
  opt.ls_tol = 0.0;
  opt.on_step = [&](const CgStep& s) { steps.push_back(s); };
  Budget budget;
  budget.max_iters = 1;
  const Matrix h = q.h;
  const Vector b = q.b;
  RunMonitor monitor(q.obj, [h, b](const Vector& x) { return 0.5 * x.dot(h * x) - b.dot(x); }, q.solution(), budget);
  RngStream rng(1, 0);
  const auto trace = newton_cg_run(monitor, q.gradient(), q.hvp(), Vector::Constant(5, 2.0), opt, rng);
  REQUIRE(steps.size() == 5);
  for (std::size_t i = 0; i < steps.size(); ++i)
    for (std::size_t j = i + 1; j < steps.size(); ++j) {
      const auto& di = steps[i].direction;
      const auto& dj = steps[j].direction;
      const double rel = std::abs(di.dot(h * dj)) / std::sqrt(di.dot(h * di) * dj.dot(h * dj));
      INFO(i << "," << j);
      CHECK(rel <= 1e-8);
    }
  // n CG steps solve an n-dimensional quadratic.
  CHECK(trace.records.back().param_error <= 1e-8);
}

TEST_CASE("Newton-CG with exact derivatives on Quad") {
  const Task quad = quad_task();
  const Objective obj = quad.objective();
  NewtonCgOptions opt;
  opt.schedule = {1.0, 1.0, 1};
  opt.ls_iters = 2;
  opt.ls_tol = 0.0;
  Budget budget;
  budget.max_iters = 2;
  RunMonitor monitor(obj, quad.function, quad.theta_true, budget);
  RngStream rng(2, 0);
  GradientProvider grad = [&](const Vector& x, double, RngStream&) { return GradientEstimate{quad.analytic_grad(x), 0}; };
  CurvatureProvider hess{{}, [&](const Vector& x, double, RngStream&) { return HessianEstimate{quad.analytic_hess(x), 0}; }};
  const auto trace = newton_cg_run(monitor, grad, hess, v2(2.5, -1.5), opt, rng);
  CHECK(trace.records.size() == 3);
  CHECK(trace.records.back().param_error < 1e-6);
  CHECK_FALSE(trace.aborted);
}

TEST_CASE("negative curvature falls back to a residual step and still descends") {
  const Task task = negated_gaussian_task(1.0);
  const Objective obj = task.objective();
  NewtonCgOptions opt;
  opt.schedule = {0.1, 0.1, 1};
  opt.trust_region = TrustRegion{0.2};
  opt.ls_iters = 1;
  std::size_t negative = 0;
  opt.on_step = [&](const CgStep& s) { negative += s.negative_curvature; };
  Budget budget;
  budget.max_iters = 40;
  RunMonitor monitor(obj, task.function, task.theta_true, budget);
  RngStream rng(3, 0);
  GradientProvider grad = [&](const Vector& x, double, RngStream&) { return GradientEstimate{task.analytic_grad(x), 0}; };
  CurvatureProvider hvp{[&](const Vector& x, const Vector& v, double, RngStream&) {
                          return HvpEstimate{task.analytic_hess(x) * v, v, 0};
                        },
                        {}};
  // Outside radius 1 the negated Gaussian is concave along the radial direction.
  const auto trace = newton_cg_run(monitor, grad, hvp, v2(2.0, 1.5), opt, rng);
  CHECK(negative > 0);
  CHECK(trace.records.back().loss < trace.records.front().loss);
  CHECK(trace.records.back().param_error < 1e-3);
}

TEST_CASE("non-finite estimates abort the run with a reason") {
  const Task quad = quad_task();
  const Objective obj = quad.objective();
  Budget budget;
  budget.max_iters = 10;
  RunMonitor monitor(obj, quad.function, quad.theta_true, budget);
  RngStream rng(4, 0);
  GradientProvider grad = [](const Vector& x, double, RngStream&) {
    return GradientEstimate{Vector::Constant(x.size(), std::nan("")), 0};
  };
  GdOptions opt;
  opt.schedule = {1.0, 1.0, 1};
  const auto trace = gd_run(monitor, grad, v2(1.0, 1.0), opt, rng);
  REQUIRE(trace.aborted);
  CHECK(trace.records.size() == 1);
}

TEST_CASE("GD runs are deterministic for equal seeds") {
  const Task quad = quad_task();
  auto run = [&] {
    const Objective obj = quad.objective();
    Budget budget;
    budget.max_iters = 30;
    RunMonitor monitor(obj, quad.function, quad.theta_true, budget, 1e-4);
    RngStream rng(5, 1);
    EstimatorConfig cfg(KernelSpec(0.5, 2), 2);
    GradientProvider grad = [&](const Vector& x, double sigma, RngStream& r) {
      EstimatorConfig c = cfg;
      c.spec = KernelSpec(sigma, 2);
      return estimate_gradient(obj, x, c, r);
    };
    GdOptions opt;
    opt.schedule = {0.5, 0.05, 30};
    opt.lr = 0.1;
    return gd_run(monitor, grad, v2(1.0, -2.0), opt, rng).records;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);
  CHECK(a.back().evals == 30 * 4);
  CHECK(a.back().wall_time_s == doctest::Approx(30 * 4 * 1e-4));
}
