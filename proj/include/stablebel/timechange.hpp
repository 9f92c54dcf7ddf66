#pragma once

// Deterministic increasing clocks l, their epsilon-smoothing
//   l^eps_t = (1/eps) * integral_t^{t+eps} l_s ds + eps * t,
// the inverse clock gamma^eps, left-point stochastic integrals against W_l and
// the discrete quadratic variation of W o l.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "stablebel/error.hpp"
#include "stablebel/stable.hpp"

namespace stablebel {

enum class KnotRule { PiecewiseConstant, PiecewiseLinear };

inline const char* to_string(KnotRule rule) noexcept {
  return rule == KnotRule::PiecewiseConstant ? "piecewise_constant" : "piecewise_linear";
}

/// Increasing cadlag path on [0, domain_end] given by finitely many knots.
///
/// PiecewiseConstant: l(t) = values[i] for knots[i] <= t < knots[i+1]
/// (right-continuous). PiecewiseLinear: linear interpolation between knots.
/// Past the last knot the path is constant in both rules.
class CadlagIncreasingPath {
 public:
  CadlagIncreasingPath(std::vector<double> knots, std::vector<double> values, KnotRule rule,
                       double domain_end = std::numeric_limits<double>::quiet_NaN())
      : knots_(std::move(knots)), values_(std::move(values)), rule_(rule) {
    validate_time_grid(knots_, "knots");
    require(values_.size() == knots_.size(), "values", "knots and values differ in length");
    for (std::size_t i = 1; i < values_.size(); ++i)
      require(values_[i] >= values_[i - 1], "values", "path must be nondecreasing");
    domain_end_ = std::isnan(domain_end) ? knots_.back() : domain_end;
    require(domain_end_ >= knots_.back(), "domain_end", "domain must contain every knot");
  }

  static CadlagIncreasingPath from_subordinator(const SubordinatorPath& path,
                                                KnotRule rule = KnotRule::PiecewiseConstant) {
    return CadlagIncreasingPath(path.grid, path.values, rule);
  }

  KnotRule rule() const noexcept { return rule_; }
  double domain_end() const noexcept { return domain_end_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Same path with the last value held constant up to `new_end`.
  CadlagIncreasingPath extended_to(double new_end) const {
    CadlagIncreasingPath copy = *this;
    copy.domain_end_ = std::max(domain_end_, new_end);
    return copy;
  }

  double value(double t) const {
    check_in_domain(t);
    const std::size_t i = piece_index(t);
    if (rule_ == KnotRule::PiecewiseConstant || i + 1 == knots_.size()) return values_[i];
    return interpolate(i, t);
  }

  /// Exact integral of l - offset over [a, b], summed piece by piece. An
  /// offset near l(a) keeps the rounding proportional to the increments of l
  /// rather than to its level.
  double integral(double a, double b, double offset = 0.0) const {
    require(a <= b, "interval", "integration bounds out of order");
    check_in_domain(a);
    check_in_domain(b);
    double total = 0.0;
    for (std::size_t i = piece_index(a); i < knots_.size(); ++i) {
      const double piece_end = i + 1 < knots_.size() ? knots_[i + 1] : domain_end_;
      const double lo = std::max(a, knots_[i]);
      const double hi = std::min(b, piece_end);
      if (hi > lo) {
        if (rule_ == KnotRule::PiecewiseConstant || i + 1 == knots_.size()) {
          total += (values_[i] - offset) * (hi - lo);
        } else {
          total += 0.5 * (hi - lo) * ((interpolate(i, lo) - offset) + (interpolate(i, hi) - offset));
        }
      }
      if (piece_end >= b) break;
    }
    return total;
  }

 private:
  void check_in_domain(double t) const {
    if (!(t >= 0.0 && t <= domain_end_ * (1.0 + 1e-15) + 1e-300))
      throw InvalidArgument("t", "evaluation outside the path domain [0, " + std::to_string(domain_end_) + "]");
  }

  std::size_t piece_index(double t) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - knots_.begin()) - 1));
  }

  double interpolate(std::size_t i, double t) const {
    const double w = (t - knots_[i]) / (knots_[i + 1] - knots_[i]);
    return values_[i] + w * (values_[i + 1] - values_[i]);
  }

  std::vector<double> knots_;
  std::vector<double> values_;
  KnotRule rule_;
  double domain_end_ = 0.0;
};

/// The smoothed clock l^eps on [0, base.domain_end() - eps]. Strictly
/// increasing with slope at least eps, and l^eps >= l.
class SmoothedPath {
 public:
  SmoothedPath(CadlagIncreasingPath base, double epsilon) : base_(std::move(base)), epsilon_(epsilon) {
    require(epsilon > 0.0 && epsilon < 1.0, "epsilon", "smoothing parameter must lie in (0,1)");
    require(base_.domain_end() > epsilon, "epsilon",
            "path not defined on [0, eps]; extend it (extended_to) before smoothing");
    domain_end_ = base_.domain_end() - epsilon;
  }

  const CadlagIncreasingPath& base() const noexcept { return base_; }
  double epsilon() const noexcept { return epsilon_; }
  double domain_end() const noexcept { return domain_end_; }

  double value(double t) const {
    check_window(t);
    const double level = base_.value(t);
    return level + (base_.integral(t, t + epsilon_, level) / epsilon_ + epsilon_ * t);
  }

  /// Right derivative (l(t+eps) - l(t))/eps + eps.
  double derivative(double t) const {
    check_window(t);
    return (base_.value(t + epsilon_) - base_.value(t)) / epsilon_ + epsilon_;
  }

  /// Points between which l^eps is a polynomial of degree <= 2.
  std::vector<double> breakpoints() const {
    std::vector<double> pts{0.0, domain_end_};
    for (double k : base_.knots()) {
      if (k <= domain_end_) pts.push_back(k);
      if (k - epsilon_ >= 0.0 && k - epsilon_ <= domain_end_) pts.push_back(k - epsilon_);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
  }

 private:
  void check_window(double t) const {
    if (!(t >= 0.0 && t <= domain_end_ * (1.0 + 1e-15) + 1e-300))
      throw InvalidArgument("t", "smoothing window [t, t+eps] leaves the path domain");
  }

  CadlagIncreasingPath base_;
  double epsilon_;
  double domain_end_ = 0.0;
};

inline SmoothedPath smooth(const CadlagIncreasingPath& path, double epsilon) { return SmoothedPath(path, epsilon); }

/// gamma^eps, the inverse of l^eps, on [l^eps_0, l^eps_{domain end}].
class InversePath {
 public:
  explicit InversePath(SmoothedPath source) : source_(std::move(source)) {
    breaks_ = source_.breakpoints();
    levels_.reserve(breaks_.size());
    for (double b : breaks_) levels_.push_back(source_.value(b));
  }

  const SmoothedPath& source() const noexcept { return source_; }
  double lower() const noexcept { return levels_.front(); }
  double upper() const noexcept { return levels_.back(); }

  double value(double s) const {
    if (s < levels_.front()) throw InvalidArgument("s", "query below l^eps_0");
    if (s > levels_.back() * (1.0 + 1e-14) + 1e-300)
      throw InvalidArgument("s", "query beyond the represented range of l^eps");
    auto it = std::upper_bound(levels_.begin(), levels_.end(), s);
    if (it == levels_.end()) return breaks_.back();
    const auto j = static_cast<std::size_t>(it - levels_.begin()) - 1;
    if (levels_[j] == s) return breaks_[j];
    return solve_in_segment(s, j);
  }

  /// d gamma / ds = 1 / (l^eps)'(gamma(s)), using the right derivative.
  double derivative(double s) const { return 1.0 / source_.derivative(value(s)); }

 private:
  double solve_in_segment(double s, std::size_t j) const {
    double lo = breaks_[j];
    double hi = breaks_[j + 1];
    double t = lo + (hi - lo) * (s - levels_[j]) / (levels_[j + 1] - levels_[j]);
    for (int iter = 0; iter < 100; ++iter) {
      const double f = source_.value(t) - s;
      if (f == 0.0) return t;
      if (f > 0.0) hi = t; else lo = t;
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) break;
      double next = t - f / source_.derivative(t);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (next == t) break;
      t = next;
    }
    return t;
  }

  SmoothedPath source_;
  std::vector<double> breaks_;
  std::vector<double> levels_;
};

inline InversePath invert(const SmoothedPath& smoothed) { return InversePath(smoothed); }

/// Left-point sum  sum_i <xi_{t_i}, W_{l_{t_{i+1}}} - W_{l_{t_i}}>.
///
/// `integrand` has one column per grid point (the last column, if present, is
/// unused). The same routine serves integration against W_S and against a
/// frozen clock W_l evaluated at l = S, so the two agree bit for bit.
inline double ito_integral_time_changed(const Eigen::Ref<const Eigen::MatrixXd>& integrand,
                                        std::span<const double> clock,
                                        const Eigen::Ref<const Eigen::MatrixXd>& w_at_clock) {
  const auto m = static_cast<Eigen::Index>(clock.size());
  require(m >= 1, "clock", "empty clock");
  require(w_at_clock.cols() == m, "W", "Brownian values and clock differ in length");
  require(integrand.cols() == m || integrand.cols() == m - 1, "integrand", "integrand length mismatch");
  require(integrand.rows() == w_at_clock.rows(), "integrand", "integrand and W differ in dimension");
  double sum = 0.0;
  for (Eigen::Index i = 0; i + 1 < m; ++i)
    sum += integrand.col(i).dot(w_at_clock.col(i + 1) - w_at_clock.col(i));
  return sum;
}

/// Discrete bracket [W_l]_T = d*(l_T - l_0 - sum of jumps) + sum over jumps |dW|^2.
///
/// A clock increment is classified as a jump when it exceeds
/// max(10 * median increment, abs_threshold). For d = 1 this is
/// l_T - sum dl + sum |dW_l|^2; for d > 1 the trace of the matrix bracket.
inline double discrete_bracket(std::span<const double> clock, const Eigen::Ref<const Eigen::MatrixXd>& w_at_clock,
                               double abs_threshold = 0.0) {
  const auto m = clock.size();
  require(m >= 1, "clock", "empty clock");
  require(w_at_clock.cols() == static_cast<Eigen::Index>(m), "W", "Brownian values and clock differ in length");
  require(abs_threshold >= 0.0, "abs_threshold", "threshold must be nonnegative");
  if (m == 1) return 0.0;
  std::vector<double> increments(m - 1);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    increments[i] = clock[i + 1] - clock[i];
    require(increments[i] >= 0.0, "clock", "clock must be nondecreasing");
  }
  const double threshold = std::max(10.0 * median(increments), abs_threshold);
  const auto d = static_cast<double>(w_at_clock.rows());
  double jump_total = 0.0;
  double jump_square = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    if (increments[i] > threshold) {
      jump_total += increments[i];
      const auto c = static_cast<Eigen::Index>(i);
      jump_square += (w_at_clock.col(c + 1) - w_at_clock.col(c)).squaredNorm();
    }
  }
  const double continuous = (clock[m - 1] - clock[0]) - jump_total;
  return d * continuous + jump_square;
}

inline void write_path_csv(std::ostream& out, const CadlagIncreasingPath& path) {
  out.precision(17);
  out << "# knot_rule=" << to_string(path.rule()) << " domain_end=" << path.domain_end() << "\n";
  out << "time,value\n";
  for (std::size_t i = 0; i < path.knots().size(); ++i) out << path.knots()[i] << ',' << path.values()[i] << '\n';
}

inline CadlagIncreasingPath read_path_csv(std::istream& in) {
  std::string line;
  KnotRule rule = KnotRule::PiecewiseConstant;
  double domain_end = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> knots;
  std::vector<double> values;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("piecewise_linear") != std::string::npos) rule = KnotRule::PiecewiseLinear;
      if (const auto pos = line.find("domain_end="); pos != std::string::npos)
        domain_end = std::stod(line.substr(pos + 11));
      continue;
    }
    if (!header_seen) {
      require(line.rfind("time,value", 0) == 0, "csv", "expected header 'time,value'");
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    require(comma != std::string::npos, "csv", "malformed row '" + line + "'");
    knots.push_back(std::stod(line.substr(0, comma)));
    values.push_back(std::stod(line.substr(comma + 1)));
  }
  return CadlagIncreasingPath(std::move(knots), std::move(values), rule, domain_end);
}

}  // namespace stablebel
