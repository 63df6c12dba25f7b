#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "smoothdiff/kernels.hpp"
#include "smoothdiff/rng.hpp"

namespace smoothdiff {

/// Tabulated inverse of a monotone CDF over [lo, hi] (sigma = 1 units).
/// Inversion is a bucketed search over the stored CDF values followed by
/// linear interpolation between grid points; buckets make lookup O(1) on
/// average.
class TabulatedInverseCdf {
 public:
  TabulatedInverseCdf(std::vector<double> grid, std::vector<double> cdf_values);

  double lookup(double xi) const;

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& cdf_values() const { return cdf_; }
  std::size_t resolution() const { return grid_.size(); }

 private:
  std::vector<double> grid_;
  std::vector<double> cdf_;
  // bucket_start_[b] is the last grid index whose CDF is <= b / buckets.
  std::vector<std::size_t> bucket_start_;
};

inline constexpr std::size_t kDefaultTableResolution = 8192;
inline constexpr double kTableHalfRange = 10.0;

/// Inverse of hessian_diag_cdf(u, 1) tabulated on [-10, 10].
TabulatedInverseCdf build_hessian_diag_table(std::size_t resolution = kDefaultTableResolution);

/// Process-wide immutable table at the default resolution.
const TabulatedInverseCdf& default_hessian_diag_table();

struct OffsetSample {
  Vector tau;
  /// log of the sampling density at tau.
  double log_pdf = 0.0;
  /// Sampling density divided by N(tau; sigma). Estimator weights are
  /// kernel_over_gaussian / density_ratio, which avoids forming N(tau).
  double density_ratio = 1.0;
  /// Element the draw was made for; for mixture draws, the chosen component.
  KernelElement element;
  bool from_mixture = false;

  double pdf() const { return std::exp(log_pdf); }
};

/// Log of N(tau; sigma I).
double log_gaussian_pdf(const Vector& tau, const KernelSpec& spec);

/// Density of the positivized, normalized kernel of `elem`, divided by N(tau).
double element_density_ratio(const Vector& tau, const KernelElement& elem, const KernelSpec& spec);

std::vector<KernelElement> gradient_elements(std::size_t dim);
/// Unique Hessian elements (upper triangle with diagonal), row-major.
std::vector<KernelElement> hessian_elements(std::size_t dim);
/// Hessian elements touching row i: the diagonal entry and each (i,j), j != i.
std::vector<KernelElement> hessian_row_elements(std::size_t i, std::size_t dim);

OffsetSample sample_gradient_offset(std::size_t i, const KernelSpec& spec, RngStream& rng);

OffsetSample sample_hessian_offset(const KernelElement& elem, const KernelSpec& spec,
                                   const TabulatedInverseCdf& table, RngStream& rng);

/// Draw for any element kind, including gradient and plain Gaussian.
OffsetSample sample_element_offset(const KernelElement& elem, const KernelSpec& spec,
                                   const TabulatedInverseCdf& table, RngStream& rng);

/// Uniform mixture over a fixed set of elements. Validated once on
/// construction; use it when drawing many samples from the same set.
class ElementMixture {
 public:
  ElementMixture(std::vector<KernelElement> elements, const KernelSpec& spec);

  const std::vector<KernelElement>& elements() const { return elements_; }
  const KernelSpec& spec() const { return spec_; }

  double density_ratio(const Vector& tau) const;
  OffsetSample sample(const TabulatedInverseCdf& table, RngStream& rng) const;

 private:
  std::vector<KernelElement> elements_;
  KernelSpec spec_;
  bool all_hessian_ = false;
};

/// Mixture density over all unique Hessian elements, divided by N(tau), in O(n).
double hessian_mixture_density_ratio(const Vector& tau, const KernelSpec& spec);

/// Picks one element uniformly, draws from it, and reports the mixture density.
OffsetSample sample_aggregate_offset(const std::vector<KernelElement>& elements, const KernelSpec& spec,
                                     const TabulatedInverseCdf& table, RngStream& rng);

/// Same distribution as an ElementMixture over hessian_elements(dim) and the
/// same draw sequence, without materializing the n(n+1)/2 element list.
OffsetSample sample_hessian_mixture_offset(const KernelSpec& spec, const TabulatedInverseCdf& table, RngStream& rng);

/// Uniform draw on [-half_width*sigma, half_width*sigma]^n (variance comparator).
OffsetSample sample_uniform_offset(const KernelSpec& spec, RngStream& rng, double half_width = kTableHalfRange);

/// (tau, -tau). Every sampling density here is even, so the density is shared.
std::pair<OffsetSample, OffsetSample> antithetic_pair(const OffsetSample& sample);

}  // namespace smoothdiff
