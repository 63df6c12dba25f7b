#include "smoothdiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace smoothdiff {

namespace {

void require_positive_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ContractViolation("sigma must be positive and finite, got " + std::to_string(sigma));
}

void require_dim(const Vector& tau, const KernelSpec& spec) {
  if (static_cast<std::size_t>(tau.size()) != spec.dim())
    throw ContractViolation("offset has length " + std::to_string(tau.size()) + ", kernel dimension is " +
                            std::to_string(spec.dim()));
}

}  // namespace

KernelSpec::KernelSpec(double sigma, std::size_t dim) : sigma_(sigma), dim_(dim) {
  require_positive_sigma(sigma);
  if (dim == 0) throw ContractViolation("kernel dimension must be at least 1");
}

double KernelSpec::gradient_norm() const {
  return 2.0 / (sigma_ * std::sqrt(2.0 * std::numbers::pi));
}

double KernelSpec::hessian_diag_beta() const {
  return sigma_ * sigma_ * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5) / 4.0;
}

KernelElement KernelElement::hessian_off_diag(std::size_t i, std::size_t j) {
  if (i == j) throw ContractViolation("off-diagonal Hessian element needs i != j");
  return {Kind::HessianOffDiag, std::min(i, j), std::max(i, j)};
}

void KernelElement::check_against(std::size_t dim) const {
  switch (kind) {
    case Kind::PlainGaussian:
      return;
    case Kind::GradientDim:
    case Kind::HessianDiag:
      if (i >= dim) throw ContractViolation("element index " + std::to_string(i) + " out of range");
      return;
    case Kind::HessianOffDiag:
      if (i >= dim || j >= dim) throw ContractViolation("element " + to_string() + " out of range");
      if (i == j) throw ContractViolation("off-diagonal element with i == j");
      return;
  }
}

std::string KernelElement::to_string() const {
  switch (kind) {
    case Kind::GradientDim:
      return "G(" + std::to_string(i) + ")";
    case Kind::HessianDiag:
      return "H(" + std::to_string(i) + "," + std::to_string(i) + ")";
    case Kind::HessianOffDiag:
      return "H(" + std::to_string(i) + "," + std::to_string(j) + ")";
    case Kind::PlainGaussian:
      break;
  }
  return "N";
}

double gaussian_pdf_1d(double u, double sigma) {
  return std::exp(-u * u / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double gaussian_pdf(const Vector& tau, const KernelSpec& spec) {
  require_dim(tau, spec);
  const double s = spec.sigma();
  const double n = static_cast<double>(spec.dim());
  const double norm = std::pow(s * std::sqrt(2.0 * std::numbers::pi), -n);
  return norm * std::exp(-tau.squaredNorm() / (2.0 * s * s));
}

double kernel_over_gaussian(const Vector& tau, const KernelElement& elem, const KernelSpec& spec) {
  require_dim(tau, spec);
  elem.check_against(spec.dim());
  const double s2 = spec.sigma() * spec.sigma();
  switch (elem.kind) {
    case KernelElement::Kind::PlainGaussian:
      return 1.0;
    case KernelElement::Kind::GradientDim:
      return -tau[elem.i] / s2;
    case KernelElement::Kind::HessianDiag:
      return (tau[elem.i] * tau[elem.i] / s2 - 1.0) / s2;
    case KernelElement::Kind::HessianOffDiag:
      return tau[elem.i] * tau[elem.j] / (s2 * s2);
  }
  return 0.0;
}

double gradient_kernel(const Vector& tau, std::size_t i, const KernelSpec& spec) {
  return kernel_over_gaussian(tau, KernelElement::gradient(i), spec) * gaussian_pdf(tau, spec);
}

double hessian_kernel(const Vector& tau, const KernelElement& elem, const KernelSpec& spec) {
  if (!elem.is_hessian()) throw ContractViolation("hessian_kernel needs a Hessian element, got " + elem.to_string());
  return kernel_over_gaussian(tau, elem, spec) * gaussian_pdf(tau, spec);
}

double gradient_pdf(double u, double sigma) {
  require_positive_sigma(sigma);
  const double s2 = sigma * sigma;
  return std::abs(u) / (2.0 * s2) * std::exp(-u * u / (2.0 * s2));
}

double gradient_cdf(double u, double sigma) {
  require_positive_sigma(sigma);
  const double half_tail = 0.5 * std::exp(-u * u / (2.0 * sigma * sigma));
  return u <= 0.0 ? half_tail : 1.0 - half_tail;
}

double gradient_inverse_cdf(double xi, double sigma) {
  require_positive_sigma(sigma);
  if (!(xi > 0.0 && xi < 1.0)) throw ContractViolation("gradient_inverse_cdf needs xi in (0,1), got " + std::to_string(xi));
  if (xi <= 0.5) return -sigma * std::sqrt(-2.0 * std::log(2.0 * xi));
  return sigma * std::sqrt(-2.0 * std::log(2.0 * (1.0 - xi)));
}

double hessian_diag_pdf(double u, double sigma) {
  require_positive_sigma(sigma);
  const double s2 = sigma * sigma;
  return std::exp(0.5) / (4.0 * sigma) * std::abs(1.0 - u * u / s2) * std::exp(-u * u / (2.0 * s2));
}

double hessian_diag_cdf(double u, double sigma) {
  require_positive_sigma(sigma);
  const double e = u / (4.0 * sigma) * std::exp(0.5 - u * u / (2.0 * sigma * sigma));
  if (u < -sigma) return -e;
  if (u <= sigma) return 0.5 + e;
  return 1.0 - e;
}

double axis_blur_gradient_kernel(double u, double sigma) {
  require_positive_sigma(sigma);
  return -u / (sigma * sigma) * gaussian_pdf_1d(u, sigma);
}

}  // namespace smoothdiff
