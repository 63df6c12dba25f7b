#include "smoothdiff/samplers.hpp"

#include <algorithm>
#include <numbers>
#include <set>

namespace smoothdiff {

namespace {

const double kSqrtTwoPi = std::sqrt(2.0 * std::numbers::pi);

// Gradient density over the Gaussian along one axis: |u| sqrt(2 pi) / (2 sigma).
double gradient_axis_ratio(double u, double sigma) { return std::abs(u) * kSqrtTwoPi / (2.0 * sigma); }

// Hessian-diagonal density over the Gaussian along one axis: beta |u^2/s^4 - 1/s^2|.
double diag_axis_ratio(double u, const KernelSpec& spec) {
  const double s2 = spec.sigma() * spec.sigma();
  return spec.hessian_diag_beta() * std::abs(u * u / s2 - 1.0) / s2;
}

void require_dim(std::size_t dim, const KernelSpec& spec) {
  if (dim != spec.dim()) throw ContractViolation("dimension mismatch between offset and kernel");
}

// Every coordinate Gaussian; the caller overwrites the differentiated axes.
Vector gaussian_offset(const KernelSpec& spec, RngStream& rng) {
  Vector tau(static_cast<Eigen::Index>(spec.dim()));
  for (Eigen::Index k = 0; k < tau.size(); ++k) tau[k] = spec.sigma() * rng.normal();
  return tau;
}

OffsetSample finish(Vector tau, const KernelElement& elem, const KernelSpec& spec) {
  OffsetSample s;
  s.density_ratio = element_density_ratio(tau, elem, spec);
  s.log_pdf = log_gaussian_pdf(tau, spec) + std::log(s.density_ratio);
  s.tau = std::move(tau);
  s.element = elem;
  return s;
}

}  // namespace

TabulatedInverseCdf::TabulatedInverseCdf(std::vector<double> grid, std::vector<double> cdf_values)
    : grid_(std::move(grid)), cdf_(std::move(cdf_values)) {
  if (grid_.size() != cdf_.size() || grid_.size() < 2)
    throw ContractViolation("tabulated CDF needs matching grid and value arrays of length >= 2");
  for (std::size_t k = 1; k < grid_.size(); ++k) {
    if (!(grid_[k] > grid_[k - 1])) throw ContractViolation("tabulated CDF grid must be strictly increasing");
    if (cdf_[k] < cdf_[k - 1]) throw ContractViolation("tabulated CDF values must be nondecreasing");
  }
  const std::size_t buckets = grid_.size();
  bucket_start_.resize(buckets + 1);
  std::size_t k = 0;
  for (std::size_t b = 0; b <= buckets; ++b) {
    const double edge = static_cast<double>(b) / static_cast<double>(buckets);
    while (k + 1 < cdf_.size() && cdf_[k + 1] <= edge) ++k;
    bucket_start_[b] = k;
  }
}

double TabulatedInverseCdf::lookup(double xi) const {
  if (xi <= cdf_.front()) return grid_.front();
  if (xi >= cdf_.back()) return grid_.back();
  const std::size_t buckets = bucket_start_.size() - 1;
  const auto b = std::min(buckets - 1, static_cast<std::size_t>(xi * static_cast<double>(buckets)));
  // Largest k in the bucket's range with cdf_[k] <= xi.
  const auto first = cdf_.begin() + static_cast<std::ptrdiff_t>(bucket_start_[b]);
  const auto last = cdf_.begin() + static_cast<std::ptrdiff_t>(std::min(bucket_start_[b + 1] + 1, cdf_.size()));
  const auto it = std::upper_bound(first, last, xi);
  const std::size_t k = static_cast<std::size_t>(it - cdf_.begin()) - 1;
  if (k + 1 >= cdf_.size()) return grid_.back();
  const double dc = cdf_[k + 1] - cdf_[k];
  if (dc <= 0.0) return grid_[k];
  return grid_[k] + (xi - cdf_[k]) / dc * (grid_[k + 1] - grid_[k]);
}

TabulatedInverseCdf build_hessian_diag_table(std::size_t resolution) {
  if (resolution < 1024) throw ContractViolation("Hessian-diagonal table resolution must be >= 1024");
  std::vector<double> grid(resolution);
  std::vector<double> cdf(resolution);
  const double step = 2.0 * kTableHalfRange / static_cast<double>(resolution - 1);
  for (std::size_t k = 0; k < resolution; ++k) {
    grid[k] = -kTableHalfRange + step * static_cast<double>(k);
    cdf[k] = hessian_diag_cdf(grid[k], 1.0);
  }
  grid.back() = kTableHalfRange;
  cdf.back() = hessian_diag_cdf(kTableHalfRange, 1.0);
  return TabulatedInverseCdf(std::move(grid), std::move(cdf));
}

const TabulatedInverseCdf& default_hessian_diag_table() {
  static const TabulatedInverseCdf table = build_hessian_diag_table(kDefaultTableResolution);
  return table;
}

double log_gaussian_pdf(const Vector& tau, const KernelSpec& spec) {
  require_dim(static_cast<std::size_t>(tau.size()), spec);
  const double s = spec.sigma();
  return -static_cast<double>(spec.dim()) * std::log(s * kSqrtTwoPi) - tau.squaredNorm() / (2.0 * s * s);
}

double element_density_ratio(const Vector& tau, const KernelElement& elem, const KernelSpec& spec) {
  elem.check_against(spec.dim());
  switch (elem.kind) {
    case KernelElement::Kind::PlainGaussian:
      return 1.0;
    case KernelElement::Kind::GradientDim:
      return gradient_axis_ratio(tau[elem.i], spec.sigma());
    case KernelElement::Kind::HessianDiag:
      return diag_axis_ratio(tau[elem.i], spec);
    case KernelElement::Kind::HessianOffDiag:
      return gradient_axis_ratio(tau[elem.i], spec.sigma()) * gradient_axis_ratio(tau[elem.j], spec.sigma());
  }
  return 0.0;
}

std::vector<KernelElement> gradient_elements(std::size_t dim) {
  std::vector<KernelElement> out;
  out.reserve(dim);
  for (std::size_t i = 0; i < dim; ++i) out.push_back(KernelElement::gradient(i));
  return out;
}

std::vector<KernelElement> hessian_elements(std::size_t dim) {
  std::vector<KernelElement> out;
  out.reserve(dim * (dim + 1) / 2);
  for (std::size_t i = 0; i < dim; ++i) {
    out.push_back(KernelElement::hessian_diag(i));
    for (std::size_t j = i + 1; j < dim; ++j) out.push_back(KernelElement::hessian_off_diag(i, j));
  }
  return out;
}

std::vector<KernelElement> hessian_row_elements(std::size_t i, std::size_t dim) {
  if (i >= dim) throw ContractViolation("row index out of range");
  std::vector<KernelElement> out;
  out.reserve(dim);
  out.push_back(KernelElement::hessian_diag(i));
  for (std::size_t j = 0; j < dim; ++j)
    if (j != i) out.push_back(KernelElement::hessian_off_diag(i, j));
  return out;
}

OffsetSample sample_gradient_offset(std::size_t i, const KernelSpec& spec, RngStream& rng) {
  const auto elem = KernelElement::gradient(i);
  elem.check_against(spec.dim());
  Vector tau = gaussian_offset(spec, rng);
  tau[static_cast<Eigen::Index>(i)] = gradient_inverse_cdf(rng.uniform(), spec.sigma());
  return finish(std::move(tau), elem, spec);
}

OffsetSample sample_hessian_offset(const KernelElement& elem, const KernelSpec& spec,
                                   const TabulatedInverseCdf& table, RngStream& rng) {
  if (!elem.is_hessian()) throw ContractViolation("sample_hessian_offset needs a Hessian element");
  elem.check_against(spec.dim());
  Vector tau = gaussian_offset(spec, rng);
  if (elem.kind == KernelElement::Kind::HessianDiag) {
    tau[static_cast<Eigen::Index>(elem.i)] = spec.sigma() * table.lookup(rng.uniform());
  } else {
    tau[static_cast<Eigen::Index>(elem.i)] = gradient_inverse_cdf(rng.uniform(), spec.sigma());
    tau[static_cast<Eigen::Index>(elem.j)] = gradient_inverse_cdf(rng.uniform(), spec.sigma());
  }
  return finish(std::move(tau), elem, spec);
}

OffsetSample sample_element_offset(const KernelElement& elem, const KernelSpec& spec,
                                   const TabulatedInverseCdf& table, RngStream& rng) {
  switch (elem.kind) {
    case KernelElement::Kind::PlainGaussian:
      return finish(gaussian_offset(spec, rng), elem, spec);
    case KernelElement::Kind::GradientDim:
      return sample_gradient_offset(elem.i, spec, rng);
    default:
      return sample_hessian_offset(elem, spec, table, rng);
  }
}

ElementMixture::ElementMixture(std::vector<KernelElement> elements, const KernelSpec& spec)
    : elements_(std::move(elements)), spec_(spec) {
  if (elements_.empty()) throw ContractViolation("mixture needs at least one element");
  std::set<std::tuple<int, std::size_t, std::size_t>> seen;
  for (const auto& e : elements_) {
    e.check_against(spec_.dim());
    if (!seen.emplace(static_cast<int>(e.kind), e.i, e.j).second)
      throw ContractViolation("duplicate mixture element " + e.to_string());
  }
  all_hessian_ = elements_.size() == spec_.dim() * (spec_.dim() + 1) / 2 &&
                 std::all_of(elements_.begin(), elements_.end(), [](const auto& e) { return e.is_hessian(); });
}

double ElementMixture::density_ratio(const Vector& tau) const {
  if (all_hessian_) return hessian_mixture_density_ratio(tau, spec_);
  double sum = 0.0;
  for (const auto& e : elements_) sum += element_density_ratio(tau, e, spec_);
  return sum / static_cast<double>(elements_.size());
}

OffsetSample ElementMixture::sample(const TabulatedInverseCdf& table, RngStream& rng) const {
  const auto& component = elements_[rng.index(elements_.size())];
  OffsetSample s = sample_element_offset(component, spec_, table, rng);
  s.density_ratio = density_ratio(s.tau);
  s.log_pdf = log_gaussian_pdf(s.tau, spec_) + std::log(s.density_ratio);
  s.from_mixture = true;
  return s;
}

double hessian_mixture_density_ratio(const Vector& tau, const KernelSpec& spec) {
  require_dim(static_cast<std::size_t>(tau.size()), spec);
  const std::size_t n = spec.dim();
  double diag = 0.0;
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (Eigen::Index k = 0; k < tau.size(); ++k) {
    diag += diag_axis_ratio(tau[k], spec);
    const double a = gradient_axis_ratio(tau[k], spec.sigma());
    abs_sum += a;
    sq_sum += a * a;
  }
  // Sum over i<j of a_i a_j.
  const double off = 0.5 * (abs_sum * abs_sum - sq_sum);
  return (diag + off) / static_cast<double>(n * (n + 1) / 2);
}

OffsetSample sample_aggregate_offset(const std::vector<KernelElement>& elements, const KernelSpec& spec,
                                     const TabulatedInverseCdf& table, RngStream& rng) {
  return ElementMixture(elements, spec).sample(table, rng);
}

OffsetSample sample_hessian_mixture_offset(const KernelSpec& spec, const TabulatedInverseCdf& table,
                                           RngStream& rng) {
  const std::size_t n = spec.dim();
  std::size_t k = rng.index(n * (n + 1) / 2);
  // Row-major upper triangle: row i holds n - i elements, diagonal first.
  std::size_t i = 0;
  while (k >= n - i) {
    k -= n - i;
    ++i;
  }
  const auto elem = k == 0 ? KernelElement::hessian_diag(i) : KernelElement::hessian_off_diag(i, i + k);
  OffsetSample s = sample_hessian_offset(elem, spec, table, rng);
  s.density_ratio = hessian_mixture_density_ratio(s.tau, spec);
  s.log_pdf = log_gaussian_pdf(s.tau, spec) + std::log(s.density_ratio);
  s.from_mixture = true;
  return s;
}

OffsetSample sample_uniform_offset(const KernelSpec& spec, RngStream& rng, double half_width) {
  if (!(half_width > 0.0)) throw ContractViolation("uniform half width must be positive");
  const double h = half_width * spec.sigma();
  Vector tau(static_cast<Eigen::Index>(spec.dim()));
  for (Eigen::Index k = 0; k < tau.size(); ++k) tau[k] = rng.uniform(-h, h);
  OffsetSample s;
  s.log_pdf = -static_cast<double>(spec.dim()) * std::log(2.0 * h);
  s.density_ratio = std::exp(s.log_pdf - log_gaussian_pdf(tau, spec));
  s.tau = std::move(tau);
  s.element = KernelElement::plain();
  return s;
}

std::pair<OffsetSample, OffsetSample> antithetic_pair(const OffsetSample& sample) {
  OffsetSample mirrored = sample;
  mirrored.tau = -sample.tau;
  return {sample, std::move(mirrored)};
}

}  // namespace smoothdiff
