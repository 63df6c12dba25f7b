#pragma once

#include <functional>
#include <optional>
#include <string>

#include "smoothdiff/estimators.hpp"
#include "smoothdiff/raster.hpp"

namespace smoothdiff {

/// Objective with known ground truth. `function` is deterministic and
/// reentrant; counted evaluation goes through objective().
struct Task {
  std::string name;
  std::size_t dim = 0;
  Objective::Function function;
  Vector theta_true;
  std::function<Vector(RngStream&)> init_sampler;

  // Optional closed forms; empty when the task has none.
  std::function<Vector(const Vector&)> analytic_grad;
  std::function<Matrix(const Vector&)> analytic_hess;
  /// Derivatives of the Gaussian-smoothed objective at bandwidth sigma.
  std::function<Vector(const Vector&, double)> smoothed_grad;
  std::function<Matrix(const Vector&, double)> smoothed_hess;
  /// Image the objective compares against a reference, if any.
  std::function<Image(const Vector&)> render;

  Objective objective() const { return Objective(dim, function); }
  /// Objective value at theta_true.
  double loss_floor() const { return function(theta_true); }
};

/// 5 x0^2 + 5 x1^2 + 7.5 x0 x1; starts uniform on [-3, 3]^2.
Task quad_task();

/// -N(theta; sigma1) in 2D; starts uniform on (-3, 3)^2.
Task negated_gaussian_task(double sigma1 = 1.0);

struct BoxTaskOptions {
  std::size_t num_boxes = 1;
  std::size_t resolution = 64;
  std::size_t supersample = 4;
};

/// Squares of side 1/8 on the unit canvas, image MSE against a reference.
/// Starts are drawn on the loss plateau: no square touches any target square
/// or another start square.
Task box_task(const BoxTaskOptions& options = {});

/// Targets used by box_task, in canvas units (x0, y0, x1, y1, ...).
Vector box_targets(std::size_t num_boxes);

/// True when every square at `centers` is disjoint from every target square
/// and from every other square, so the loss is at its plateau value.
bool box_on_plateau(const Vector& centers, std::size_t num_boxes, double half_size = 1.0 / 16.0);

/// side x side texels clamped to [0, 1], MSE against a fixed reference.
Task texture_task(std::size_t side = 16);

/// Sphere shaded per pixel with Phong reflectance under one point light.
/// Parameters: diffuse RGB, specular RGB, shininess exponent (clamped to
/// 1e-3 when not positive).
Task phong_sphere_task(std::size_t resolution = 32);

/// Lookup by name: quad, neg_gaussian, box2, box10, texture8, texture16,
/// texture32, phong.
Task make_task(const std::string& name);

}  // namespace smoothdiff
