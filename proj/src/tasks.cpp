#include "smoothdiff/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>

namespace smoothdiff {

namespace {

Vector uniform_vector(std::size_t n, double lo, double hi, RngStream& rng) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.uniform(lo, hi);
  return v;
}

void require_len(const Vector& theta, std::size_t n, const char* task) {
  if (static_cast<std::size_t>(theta.size()) != n)
    throw ContractViolation(std::string(task) + " expects " + std::to_string(n) + " parameters");
}

// N(theta; s) in 2D.
double gauss2(const Vector& theta, double s) {
  return std::exp(-theta.squaredNorm() / (2.0 * s * s)) / (2.0 * std::numbers::pi * s * s);
}

constexpr std::array<std::array<double, 2>, 8> kBoxTargets{{{0.5, 0.5},
                                                           {0.25, 0.25},
                                                           {0.75, 0.75},
                                                           {0.25, 0.75},
                                                           {0.75, 0.25},
                                                           {0.5, 0.125},
                                                           {0.125, 0.5},
                                                           {0.875, 0.5}}};

bool squares_overlap(double ax, double ay, double bx, double by, double h) {
  return std::abs(ax - bx) < 2.0 * h && std::abs(ay - by) < 2.0 * h;
}

// Per-pixel quantities of the Phong sphere that do not depend on parameters.
struct PhongGeometry {
  std::size_t resolution;
  std::size_t pixels;
  std::vector<double> diffuse;   // max(0, n.l), zero off the sphere
  std::vector<double> specular;  // max(0, r.v)
  std::vector<double> log_specular;
};

std::shared_ptr<const PhongGeometry> phong_geometry(std::size_t res) {
  auto g = std::make_shared<PhongGeometry>();
  g->resolution = res;
  g->pixels = res * res;
  g->diffuse.assign(g->pixels, 0.0);
  g->specular.assign(g->pixels, 0.0);
  g->log_specular.assign(g->pixels, 0.0);
  const Eigen::Vector3d light(2.0, 2.0, 3.0);
  const Eigen::Vector3d view(0.0, 0.0, 1.0);
  for (std::size_t py = 0; py < res; ++py) {
    for (std::size_t px = 0; px < res; ++px) {
      const double x = 2.0 * (static_cast<double>(px) + 0.5) / static_cast<double>(res) - 1.0;
      const double y = 1.0 - 2.0 * (static_cast<double>(py) + 0.5) / static_cast<double>(res);
      const double r2 = x * x + y * y;
      if (r2 >= 1.0) continue;
      const Eigen::Vector3d n(x, y, std::sqrt(1.0 - r2));
      const Eigen::Vector3d l = (light - n).normalized();
      const double nl = n.dot(l);
      if (nl <= 0.0) continue;
      const Eigen::Vector3d refl = 2.0 * nl * n - l;
      const std::size_t k = py * res + px;
      g->diffuse[k] = nl;
      const double rv = refl.dot(view);
      if (rv > 0.0) {
        g->specular[k] = rv;
        g->log_specular[k] = std::log(rv);
      }
    }
  }
  return g;
}

double phong_shininess(double p) { return p > 0.0 ? p : 1e-3; }

Image phong_render(const PhongGeometry& g, const Vector& theta) {
  const double p = phong_shininess(theta[6]);
  Image img(g.resolution, g.resolution, 3, 0.0);
  for (std::size_t k = 0; k < g.pixels; ++k) {
    const double sp = g.specular[k] > 0.0 ? std::pow(g.specular[k], p) : 0.0;
    for (std::size_t c = 0; c < 3; ++c)
      img.pixels[k * 3 + c] = theta[static_cast<Eigen::Index>(c)] * g.diffuse[k] +
                              theta[static_cast<Eigen::Index>(3 + c)] * sp;
  }
  return img;
}

}  // namespace

Task quad_task() {
  Task t;
  t.name = "quad";
  t.dim = 2;
  t.function = [](const Vector& x) {
    require_len(x, 2, "quad");
    return 5.0 * x[0] * x[0] + 5.0 * x[1] * x[1] + 7.5 * x[0] * x[1];
  };
  t.theta_true = Vector::Zero(2);
  t.init_sampler = [](RngStream& rng) { return uniform_vector(2, -3.0, 3.0, rng); };
  t.analytic_grad = [](const Vector& x) {
    Vector g(2);
    g << 10.0 * x[0] + 7.5 * x[1], 10.0 * x[1] + 7.5 * x[0];
    return g;
  };
  t.analytic_hess = [](const Vector&) {
    Matrix h(2, 2);
    h << 10.0, 7.5, 7.5, 10.0;
    return h;
  };
  // Smoothing shifts a quadratic by a constant only.
  t.smoothed_grad = [g = t.analytic_grad](const Vector& x, double) { return g(x); };
  t.smoothed_hess = [h = t.analytic_hess](const Vector& x, double) { return h(x); };
  return t;
}

Task negated_gaussian_task(double sigma1) {
  if (!(sigma1 > 0.0)) throw ContractViolation("sigma1 must be positive");
  Task t;
  t.name = "neg_gaussian";
  t.dim = 2;
  t.function = [sigma1](const Vector& x) {
    require_len(x, 2, "neg_gaussian");
    return -gauss2(x, sigma1);
  };
  t.theta_true = Vector::Zero(2);
  t.init_sampler = [](RngStream& rng) { return uniform_vector(2, -3.0, 3.0, rng); };
  auto grad_at = [](const Vector& x, double s) -> Vector { return x / (s * s) * gauss2(x, s); };
  auto hess_at = [](const Vector& x, double s) -> Matrix {
    const double s2 = s * s;
    return (Matrix::Identity(2, 2) / s2 - x * x.transpose() / (s2 * s2)) * gauss2(x, s);
  };
  t.analytic_grad = [=](const Vector& x) { return grad_at(x, sigma1); };
  t.analytic_hess = [=](const Vector& x) { return hess_at(x, sigma1); };
  // Convolving two Gaussians adds their variances.
  t.smoothed_grad = [=](const Vector& x, double sigma) { return grad_at(x, std::hypot(sigma1, sigma)); };
  t.smoothed_hess = [=](const Vector& x, double sigma) { return hess_at(x, std::hypot(sigma1, sigma)); };
  return t;
}

Vector box_targets(std::size_t num_boxes) {
  if (num_boxes < 1 || num_boxes > kBoxTargets.size()) throw ContractViolation("box count must lie in 1..8");
  Vector v(static_cast<Eigen::Index>(2 * num_boxes));
  for (std::size_t b = 0; b < num_boxes; ++b) {
    v[static_cast<Eigen::Index>(2 * b)] = kBoxTargets[b][0];
    v[static_cast<Eigen::Index>(2 * b + 1)] = kBoxTargets[b][1];
  }
  return v;
}

bool box_on_plateau(const Vector& centers, std::size_t num_boxes, double half_size) {
  const Vector targets = box_targets(num_boxes);
  const double h = half_size;
  auto cx = [&](std::size_t b) { return std::clamp(centers[static_cast<Eigen::Index>(2 * b)], h, 1.0 - h); };
  auto cy = [&](std::size_t b) { return std::clamp(centers[static_cast<Eigen::Index>(2 * b + 1)], h, 1.0 - h); };
  for (std::size_t b = 0; b < num_boxes; ++b) {
    for (std::size_t t = 0; t < num_boxes; ++t)
      if (squares_overlap(cx(b), cy(b), targets[static_cast<Eigen::Index>(2 * t)],
                          targets[static_cast<Eigen::Index>(2 * t + 1)], h))
        return false;
    for (std::size_t o = b + 1; o < num_boxes; ++o)
      if (squares_overlap(cx(b), cy(b), cx(o), cy(o), h)) return false;
  }
  return true;
}

Task box_task(const BoxTaskOptions& options) {
  BoxScene scene;
  scene.resolution = options.resolution;
  scene.supersample = options.supersample;
  scene.intensities.assign(options.num_boxes, 1.0);
  scene.validate();
  const Vector targets = box_targets(options.num_boxes);
  auto reference = std::make_shared<const Image>(render_boxes(scene, targets));

  Task t;
  t.name = "box" + std::to_string(2 * options.num_boxes);
  t.dim = 2 * options.num_boxes;
  t.function = [scene, reference, targets](const Vector& x) { return box_loss(scene, x, *reference, targets); };
  t.theta_true = targets;
  t.render = [scene](const Vector& x) { return render_boxes(scene, x); };
  const std::size_t boxes = options.num_boxes;
  const double h = scene.half_size;
  t.init_sampler = [boxes, h](RngStream& rng) {
    Vector x(static_cast<Eigen::Index>(2 * boxes));
    for (;;) {
      for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = rng.uniform(h, 1.0 - h);
      if (box_on_plateau(x, boxes, h)) return x;
    }
  };
  return t;
}

Task texture_task(std::size_t side) {
  if (side < 4) throw ContractViolation("texture side must be at least 4");
  const std::size_t n = side * side;
  Vector ref(static_cast<Eigen::Index>(n));
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(side);
      const double v = static_cast<double>(y) / static_cast<double>(side);
      ref[static_cast<Eigen::Index>(y * side + x)] =
          0.5 + 0.35 * std::sin(3.0 * std::numbers::pi * u) * std::cos(2.0 * std::numbers::pi * v);
    }
  const double scale = 1.0 / static_cast<double>(n);

  Task t;
  t.name = "texture" + std::to_string(side);
  t.dim = n;
  t.function = [ref, scale](const Vector& x) {
    require_len(x, static_cast<std::size_t>(ref.size()), "texture");
    return (x.cwiseMax(0.0).cwiseMin(1.0) - ref).squaredNorm() * scale;
  };
  t.theta_true = ref;
  t.init_sampler = [n](RngStream& rng) { return uniform_vector(n, 0.0, 1.0, rng); };
  t.analytic_grad = [ref, scale](const Vector& x) -> Vector {
    const Vector inside = ((x.array() >= 0.0) && (x.array() <= 1.0)).cast<double>();
    return 2.0 * scale * (x.cwiseMax(0.0).cwiseMin(1.0) - ref).cwiseProduct(inside);
  };
  t.analytic_hess = [scale](const Vector& x) -> Matrix {
    const Vector inside = ((x.array() >= 0.0) && (x.array() <= 1.0)).cast<double>();
    return Matrix(2.0 * scale * inside.asDiagonal());
  };
  t.render = [side](const Vector& x) {
    Image img(side, side, 1);
    for (std::size_t k = 0; k < img.pixels.size(); ++k)
      img.pixels[k] = std::clamp(x[static_cast<Eigen::Index>(k)], 0.0, 1.0);
    return img;
  };
  return t;
}

Task phong_sphere_task(std::size_t resolution) {
  if (resolution < 8) throw ContractViolation("Phong sphere needs at least 8x8 pixels");
  auto geom = phong_geometry(resolution);
  Vector truth(7);
  truth << 0.7, 0.4, 0.2, 0.3, 0.3, 0.3, 12.0;
  auto reference = std::make_shared<const Image>(phong_render(*geom, truth));
  const double norm = 1.0 / static_cast<double>(geom->pixels * 3);

  Task t;
  t.name = "phong";
  t.dim = 7;
  t.function = [geom, reference](const Vector& x) {
    require_len(x, 7, "phong");
    return mean_squared_error(phong_render(*geom, x), *reference);
  };
  t.theta_true = truth;
  t.render = [geom](const Vector& x) { return phong_render(*geom, x); };
  t.init_sampler = [](RngStream& rng) {
    Vector x = uniform_vector(7, 0.05, 1.0, rng);
    x[6] = rng.uniform(2.0, 40.0);
    return x;
  };
  // Per pixel and channel c: I = kd_c d + ks_c s^p; only ks_c and p interact.
  auto derivatives = [geom, reference, norm](const Vector& x, Vector* grad, Matrix* hess) {
    const bool clamped = !(x[6] > 0.0);
    const double p = phong_shininess(x[6]);
    if (grad) *grad = Vector::Zero(7);
    if (hess) *hess = Matrix::Zero(7, 7);
    for (std::size_t k = 0; k < geom->pixels; ++k) {
      const double s = geom->specular[k];
      const double sp = s > 0.0 ? std::pow(s, p) : 0.0;
      const double ls = clamped ? 0.0 : geom->log_specular[k];
      for (Eigen::Index c = 0; c < 3; ++c) {
        const double value = x[c] * geom->diffuse[k] + x[3 + c] * sp;
        const double e = value - reference->pixels[k * 3 + static_cast<std::size_t>(c)];
        // Nonzero entries of the pixel gradient: kd_c, ks_c, p.
        const std::array<Eigen::Index, 3> idx{c, 3 + c, 6};
        const std::array<double, 3> d{geom->diffuse[k], sp, x[3 + c] * sp * ls};
        if (grad)
          for (std::size_t a = 0; a < 3; ++a) (*grad)[idx[a]] += 2.0 * norm * e * d[a];
        if (hess) {
          for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = 0; b < 3; ++b) (*hess)(idx[a], idx[b]) += 2.0 * norm * d[a] * d[b];
          const double cross = 2.0 * norm * e * sp * ls;
          (*hess)(3 + c, 6) += cross;
          (*hess)(6, 3 + c) += cross;
          (*hess)(6, 6) += 2.0 * norm * e * x[3 + c] * sp * ls * ls;
        }
      }
    }
  };
  t.analytic_grad = [derivatives](const Vector& x) {
    Vector g;
    derivatives(x, &g, nullptr);
    return g;
  };
  t.analytic_hess = [derivatives](const Vector& x) {
    Matrix h;
    derivatives(x, nullptr, &h);
    return h;
  };
  return t;
}

Task make_task(const std::string& name) {
  if (name == "quad") return quad_task();
  if (name == "neg_gaussian") return negated_gaussian_task(1.0);
  if (name == "box2") return box_task({1, 64, 4});
  if (name == "box10") return box_task({5, 64, 4});
  if (name == "texture8") return texture_task(8);
  if (name == "texture16") return texture_task(16);
  if (name == "texture32") return texture_task(32);
  if (name == "phong") return phong_sphere_task(32);
  throw ContractViolation("unknown task '" + name + "'");
}

}  // namespace smoothdiff
