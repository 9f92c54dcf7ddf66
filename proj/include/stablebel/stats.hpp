#pragma once

// Small statistics toolkit used by the estimators and checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "stablebel/error.hpp"

namespace stablebel {

/// Welford accumulator; `merge` uses the pairwise update so partial sums
/// from blocks can be combined in a fixed order.
struct RunningMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const RunningMoments& other) noexcept {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double n_a = static_cast<double>(count);
    const double n_b = static_cast<double>(other.count);
    const double n = n_a + n_b;
    const double delta = other.mean - mean;
    mean += delta * n_b / n;
    m2 += other.m2 + delta * delta * n_a * n_b / n;
    count += other.count;
  }

  double variance() const noexcept {
    return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
  }
  double std_err() const noexcept {
    return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
  }
};

/// One accumulator per output component (e.g. per gradient direction).
struct MomentVector {
  std::vector<RunningMoments> components;

  void resize(std::size_t n) { components.resize(n); }
  RunningMoments& operator[](std::size_t i) { return components[i]; }
  const RunningMoments& operator[](std::size_t i) const { return components[i]; }

  void merge(const MomentVector& other) {
    if (components.size() < other.components.size()) components.resize(other.components.size());
    for (std::size_t i = 0; i < other.components.size(); ++i) components[i].merge(other.components[i]);
  }
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "x", "length mismatch in least_squares");
  require(x.size() >= 2, "x", "need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0.0, "x", "degenerate abscissae");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    fit.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return fit;
}

/// Type-7 (linear interpolation) quantile of already sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  require(!sorted.empty(), "data", "empty sample");
  require(q >= 0.0 && q <= 1.0, "q", "quantile level outside [0,1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, 0.5);
}

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "data", "empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Anderson-Darling A^2 against a fully specified N(0,1). The 1% critical
/// value for this case is 3.857.
inline double anderson_darling_standard_normal(std::vector<double> z) {
  require(z.size() >= 8, "data", "sample too small for Anderson-Darling");
  std::sort(z.begin(), z.end());
  const auto n = z.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = std::clamp(normal_cdf(z[i]), 1e-300, 1.0 - 1e-16);
    const double hi = std::clamp(normal_cdf(z[n - 1 - i]), 1e-300, 1.0 - 1e-16);
    s += (2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log1p(-hi));
  }
  return -static_cast<double>(n) - s / static_cast<double>(n);
}

inline constexpr double kAndersonDarlingCritical1Percent = 3.857;

}  // namespace stablebel
