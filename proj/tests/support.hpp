#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/differentiation/finite_difference.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace testing {

/// Asymptotic Kolmogorov critical value for sqrt(n) * D at significance 0.999.
inline constexpr double kKs999 = 1.9495;

/// sqrt(n) * sup |F_n - F| for the given sample.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double f = cdf(xs[k]);
    d = std::max({d, std::abs(static_cast<double>(k + 1) / n - f), std::abs(f - static_cast<double>(k) / n)});
  }
  return std::sqrt(n) * d;
}

/// Eighth-order central difference of f at x, taken in the coordinate
/// u = (x' - x) / scale so the step adapts to the width of f.
inline double derivative(const std::function<double(double)>& f, double x, double scale) {
  auto g = [&](double u) { return f(x + scale * u); };
  return boost::math::differentiation::finite_difference_derivative<decltype(g), double, 8>(g, 0.0) / scale;
}

inline double integrate(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

/// Pearson chi-square over equal-width bins on [lo, hi] with expected bin
/// masses from numeric integration of `pdf`. Bins with expectation below 5
/// are merged into their neighbour. Returns true when the statistic is below
/// the 0.999 quantile.
inline bool chi_square_passes(const std::vector<double>& xs, const std::function<double(double)>& pdf, double lo,
                              double hi, std::size_t bins) {
  std::vector<double> observed(bins, 0.0), expected(bins, 0.0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double x : xs) {
    if (x < lo || x >= hi) continue;
    observed[std::min(bins - 1, static_cast<std::size_t>((x - lo) / width))] += 1.0;
  }
  const double n = static_cast<double>(xs.size());
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = lo + width * static_cast<double>(b);
    expected[b] = n * integrate(pdf, a, a + width);
  }
  double stat = 0.0, acc_o = 0.0, acc_e = 0.0;
  std::size_t cells = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    acc_o += observed[b];
    acc_e += expected[b];
    if (acc_e < 5.0 && b + 1 < bins) continue;
    stat += (acc_o - acc_e) * (acc_o - acc_e) / acc_e;
    acc_o = acc_e = 0.0;
    ++cells;
  }
  const boost::math::chi_squared dist(static_cast<double>(cells - 1));
  return stat < boost::math::quantile(dist, 0.999);
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= n - 1.0;
  return {m, std::sqrt(v / n)};
}

}  // namespace testing
