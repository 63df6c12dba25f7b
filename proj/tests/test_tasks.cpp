#include <cmath>
#include <numbers>

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "smoothdiff/harness.hpp"
#include "smoothdiff/tasks.hpp"

using namespace smoothdiff;

namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Vector fd_gradient(const Objective::Function& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (f(p) - f(m)) / (2 * h);
  }
  return g;
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& g, const Vector& x, double h) {
  Matrix j(x.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector p = x, m = x;
    p[i] += h;
    m[i] -= h;
    j.col(i) = (g(p) - g(m)) / (2 * h);
  }
  return j;
}

// Point-sampled reference renderer: one channel per square, each pixel the
// mean over an ss x ss grid of sample points.
Image naive_boxes(const BoxScene& scene, const Vector& centers) {
  const std::size_t res = scene.resolution, ss = scene.supersample, boxes = scene.num_boxes();
  Image img(res, res, boxes);
  for (std::size_t b = 0; b < boxes; ++b) {
    const double h = scene.half_size;
    const double cx = std::clamp(centers[static_cast<Eigen::Index>(2 * b)], h, 1 - h);
    const double cy = std::clamp(centers[static_cast<Eigen::Index>(2 * b + 1)], h, 1 - h);
    for (std::size_t py = 0; py < res; ++py)
      for (std::size_t px = 0; px < res; ++px) {
        double acc = 0.0;
        for (std::size_t sy = 0; sy < ss; ++sy)
          for (std::size_t sx = 0; sx < ss; ++sx) {
            const double x = (static_cast<double>(px * ss + sx) + 0.5) / static_cast<double>(res * ss);
            const double y = (static_cast<double>(py * ss + sy) + 0.5) / static_cast<double>(res * ss);
            const bool inside = std::abs(x - cx) < h && std::abs(y - cy) < h;
            acc += inside ? scene.intensities[b] : scene.background;
          }
        img.at(px, py, b) = acc / static_cast<double>(ss * ss);
      }
  }
  return img;
}

}  // namespace

TEST_CASE("Quad values and spectrum") {
  const Task quad = quad_task();
  CHECK(quad.function(Vector::Zero(2)) == 0.0);
  CHECK(quad.function(v2(1, 1)) == doctest::Approx(17.5));
  Eigen::SelfAdjointEigenSolver<Matrix> es(quad.analytic_hess(v2(0.3, 0.1)));
  CHECK(es.eigenvalues()[0] == doctest::Approx(2.5));
  CHECK(es.eigenvalues()[1] == doctest::Approx(17.5));
  CHECK(quad.smoothed_hess(v2(1, 1), 0.7).isApprox(quad.analytic_hess(v2(1, 1))));
  CHECK(quad.smoothed_grad(v2(1, 1), 0.7).isApprox(v2(17.5, 17.5)));
  RngStream rng(1, 0);
  for (int k = 0; k < 100; ++k) CHECK(quad.init_sampler(rng).cwiseAbs().maxCoeff() <= 3.0);
}

TEST_CASE("negated Gaussian closed forms") {
  const Task task = negated_gaussian_task(1.0);
  CHECK(task.function(Vector::Zero(2)) == doctest::Approx(-1.0 / (2 * std::numbers::pi)));
  // Smoothed with sigma = 1: -N(0; sqrt 2), Hessian I / (8 pi) at the origin.
  const Matrix h0 = task.smoothed_hess(Vector::Zero(2), 1.0);
  CHECK(h0(0, 0) == doctest::Approx(1.0 / (8 * std::numbers::pi)).epsilon(1e-12));
  CHECK(h0(1, 1) == doctest::Approx(1.0 / (8 * std::numbers::pi)).epsilon(1e-12));
  CHECK(h0(0, 1) == 0.0);
  const double s = std::sqrt(2.0);
  auto smoothed = [s](const Vector& x) { return -std::exp(-0.5 * x.squaredNorm() / (s * s)) / (2 * std::numbers::pi * s * s); };
  for (const Vector& x : {v2(0.4, -1.2), v2(2.0, 0.5), v2(-0.1, 0.0)}) {
    CHECK((task.smoothed_grad(x, 1.0) - fd_gradient(smoothed, x, 1e-5)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((task.smoothed_hess(x, 1.0) - fd_jacobian([&](const Vector& y) { return task.smoothed_grad(y, 1.0); }, x, 1e-5))
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    CHECK((task.analytic_grad(x) - fd_gradient(task.function, x, 1e-5)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("box renderer matches point sampling") {
  BoxScene scene;
  scene.intensities = {1.0, 0.6, 0.3};
  scene.background = 0.1;
  const Vector targets = box_targets(3);
  const Image ref = naive_boxes(scene, targets);
  CHECK((Eigen::Map<const Vector>(render_boxes(scene, targets).pixels.data(), 64 * 64 * 3) -
         Eigen::Map<const Vector>(ref.pixels.data(), 64 * 64 * 3))
            .cwiseAbs()
            .maxCoeff() < 1e-14);
  RngStream rng(2, 0);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    Vector x(6);
    for (int i = 0; i < 6; ++i) x[i] = rng.uniform(-0.2, 1.2);
    const Image img = naive_boxes(scene, x);
    worst = std::max(worst, (Eigen::Map<const Vector>(render_boxes(scene, x).pixels.data(), 64 * 64 * 3) -
                             Eigen::Map<const Vector>(img.pixels.data(), 64 * 64 * 3))
                                .cwiseAbs()
                                .maxCoeff());
    worst = std::max(worst, std::abs(box_loss(scene, x, ref, targets) - mean_squared_error(img, ref)));
  }
  CHECK(worst < 1e-14);
}

TEST_CASE("box task plateau") {
  const Task box = make_task("box2");
  CHECK(box.function(box.theta_true) == 0.0);
  // Equal sub-pixel phase: whole-pixel translations of a disjoint square.
  const double px = 1.0 / 64.0;
  const double plateau = box.function(v2(0.2, 0.2));
  CHECK(box.function(v2(0.2 + 35 * px, 0.2 + 3 * px)) == doctest::Approx(plateau).epsilon(1e-14));
  CHECK(box.function(v2(0.2 - 4 * px, 0.2 + 38 * px)) == doctest::Approx(plateau).epsilon(1e-14));
  // Clamped to the border, still on the plateau.
  CHECK(box.function(v2(-3.0, 0.2)) == box.function(v2(1.0 / 16.0, 0.2)));
  const Objective obj = box.objective();
  CHECK(estimate_gradient_fd(obj, v2(0.2, 0.8), 1e-6).g.isZero(0.0));
  for (double sigma : {0.3, 1.5}) {
    EstimatorConfig cfg(KernelSpec(sigma, 2), 20000);
    RngStream rng(3, 0);
    const Vector theta = v2(0.2, 0.8);
    const Vector g = estimate_gradient(obj, theta, cfg, rng).g;
    INFO("sigma " << sigma << " g " << g.transpose());
    CHECK(g.norm() > 0.0);
    // Descent direction points from the square toward its target.
    CHECK((-g).dot(box.theta_true - theta) > 0.0);
  }
}

TEST_CASE("box starts lie on the plateau") {
  for (const char* name : {"box2", "box10"}) {
    const Task box = make_task(name);
    const std::size_t boxes = box.dim / 2;
    RngStream rng(4, 0);
    const Objective obj = box.objective();
    for (int k = 0; k < 50; ++k) {
      const Vector x = box.init_sampler(rng);
      CHECK(box_on_plateau(x, boxes));
      CHECK(estimate_gradient_fd(obj, x, 1e-6).g.isZero(0.0));
      CHECK(x.minCoeff() >= 1.0 / 16.0);
      CHECK(x.maxCoeff() <= 1.0 - 1.0 / 16.0);
    }
  }
  CHECK_FALSE(box_on_plateau(v2(0.5, 0.5), 1));
  CHECK_THROWS_AS(box_targets(9), ContractViolation);
}

TEST_CASE("texture task") {
  const Task tex = texture_task(8);
  CHECK(tex.function(tex.theta_true) == 0.0);
  RngStream rng(5, 0);
  Vector x = tex.init_sampler(rng);
  x = x.cwiseMax(0.01).cwiseMin(0.99);
  const Vector expect = 2.0 * (x - tex.theta_true) / 64.0;
  CHECK((tex.analytic_grad(x) - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((fd_gradient(tex.function, x, 1e-6) - expect).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(hessian_evals_per_pair(SamplingMode::AggregateIS, 256) == 2);
  CHECK(hessian_evals_per_pair(SamplingMode::PerElementIS, 256) == 65792);
  const Task tex16 = texture_task(16);
  const Objective obj = tex16.objective();
  EstimatorConfig cfg(KernelSpec(0.1, 256), 2);
  RngStream r2(6, 0);
  (void)estimate_hessian(obj, tex16.theta_true, cfg, r2);
  CHECK(obj.eval_count() == 4);
}

TEST_CASE("Phong sphere task") {
  const Task phong = make_task("phong");
  CHECK(phong.function(phong.theta_true) == 0.0);
  RngStream rng(7, 0);
  for (int k = 0; k < 20; ++k) {
    const Vector x = phong.init_sampler(rng);
    const Vector fd = fd_gradient(phong.function, x, 1e-5);
    const Vector g = phong.analytic_grad(x);
    CHECK((g - fd).norm() <= 1e-4 * std::max(g.norm(), 1e-12));
    const Matrix hfd = fd_jacobian(phong.analytic_grad, x, 1e-5);
    const Matrix h = phong.analytic_hess(x);
    CHECK((h - hfd).norm() <= 1e-4 * std::max(h.norm(), 1e-12));
  }
  const Image img = phong.render(phong.theta_true);
  CHECK(img.channels == 3);
  CHECK(img.width == 32);
}

TEST_CASE("Phong: Newton-CG beats Adam in evaluations to 0.99 loss reduction") {
  RunConfig g;
  g.task = "phong";
  g.method = Method::OurG;
  g.samples = 4;
  g.sigma_start = 0.1;
  g.sigma_end = 0.001;
  g.sigma_iters = 200;
  g.lr = 0.1;
  g.budget.evals = 8000;
  g.ensemble = 10;
  g.deterministic = true;
  g.seed = 0;
  RunConfig a = g;
  a.method = Method::OurHVPA;
  a.lr.reset();
  a.trust_region = 0.1;
  a.ls_iters = 1;
  const auto rg = run_ensemble(g);
  const auto ra = run_ensemble(a);
  REQUIRE(ra.loss_thresholds[1].median_evals);
  const double first = rg.loss_thresholds[1].median_evals.value_or(std::numeric_limits<double>::infinity());
  INFO("Adam " << first << " Newton-CG " << *ra.loss_thresholds[1].median_evals);
  CHECK(*ra.loss_thresholds[1].median_evals < first);
}

TEST_CASE("task lookup") {
  for (const char* name : {"quad", "neg_gaussian", "box2", "box10", "texture8", "texture16", "texture32", "phong"}) {
    const Task t = make_task(name);
    CHECK(t.dim == static_cast<std::size_t>(t.theta_true.size()));
    CHECK(t.loss_floor() == doctest::Approx(t.function(t.theta_true)));
  }
  CHECK_THROWS_AS(make_task("mug"), ContractViolation);
}
