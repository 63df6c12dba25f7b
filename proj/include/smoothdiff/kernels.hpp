#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace smoothdiff {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a caller breaks an operation's preconditions.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Isotropic Gaussian smoothing kernel: per-axis standard deviation and
/// parameter-space dimension.
class KernelSpec {
 public:
  KernelSpec(double sigma, std::size_t dim);

  double sigma() const { return sigma_; }
  std::size_t dim() const { return dim_; }

  /// Partition constant of the positivized gradient kernel, 2/(sigma sqrt(2 pi)).
  double gradient_norm() const;
  /// Scale that turns |d2/du2 N(u)| into a density, sigma^2 sqrt(2 pi) e^{1/2} / 4.
  double hessian_diag_beta() const;

 private:
  double sigma_;
  std::size_t dim_;
};

/// One element of a differential representation: a gradient component, a
/// Hessian entry, or the undifferentiated Gaussian.
struct KernelElement {
  enum class Kind { GradientDim, HessianDiag, HessianOffDiag, PlainGaussian };

  Kind kind = Kind::PlainGaussian;
  std::size_t i = 0;
  std::size_t j = 0;

  static KernelElement gradient(std::size_t i) { return {Kind::GradientDim, i, i}; }
  static KernelElement hessian_diag(std::size_t i) { return {Kind::HessianDiag, i, i}; }
  /// Stored with i < j so (i,j) and (j,i) compare equal.
  static KernelElement hessian_off_diag(std::size_t i, std::size_t j);
  static KernelElement plain() { return {}; }

  bool is_hessian() const { return kind == Kind::HessianDiag || kind == Kind::HessianOffDiag; }
  void check_against(std::size_t dim) const;
  std::string to_string() const;

  friend bool operator==(const KernelElement&, const KernelElement&) = default;
};

double gaussian_pdf_1d(double u, double sigma);

/// Product of per-axis Gaussian densities, i.e. N(tau; sigma I).
double gaussian_pdf(const Vector& tau, const KernelSpec& spec);

/// d/dtau_i N(tau) = -tau_i / sigma^2 * N(tau).
double gradient_kernel(const Vector& tau, std::size_t i, const KernelSpec& spec);

/// Second-derivative kernel for a Hessian element.
double hessian_kernel(const Vector& tau, const KernelElement& elem, const KernelSpec& spec);

/// Kernel value divided by N(tau). Cancels the Gaussian factor so weights stay
/// finite in high dimension where N(tau) underflows.
double kernel_over_gaussian(const Vector& tau, const KernelElement& elem, const KernelSpec& spec);

// 1D densities of the positivized kernels along the differentiated axis.

/// (|u| / (2 sigma^2)) exp(-u^2 / (2 sigma^2)).
double gradient_pdf(double u, double sigma);
double gradient_cdf(double u, double sigma);
/// Closed-form inverse of gradient_cdf; xi must lie in (0,1).
double gradient_inverse_cdf(double xi, double sigma);

/// beta * |d2/du2 N(u)|, normalized to integrate to one.
double hessian_diag_pdf(double u, double sigma);
/// Three-branch CDF of hessian_diag_pdf; 1/4 at -sigma, 1/2 at 0, 3/4 at +sigma.
double hessian_diag_cdf(double u, double sigma);

/// Gradient kernel blurred along the differentiated axis only.
double axis_blur_gradient_kernel(double u, double sigma);

}  // namespace smoothdiff
