#pragma once

// Positive stable subordinators and Brownian motion run on their clock.
//
// Normalization: the subordinator index is beta = alpha/2 and
//   E exp(-lambda S_t) = exp(-t lambda^beta).
// With this scale W_{S_t} is a symmetric alpha-stable process.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "stablebel/error.hpp"
#include "stablebel/parallel.hpp"
#include "stablebel/random.hpp"
#include "stablebel/stats.hpp"

namespace stablebel {

/// Columns are values at successive grid points; rows are coordinates.
using PathMatrix = Eigen::MatrixXd;

/// Increments of the subordinator smaller than this draw no Gaussian.
inline constexpr double kZeroIncrement = 1e-12;

/// Stability index of the driving process and the derived subordinator index.
class StableParams {
 public:
  explicit StableParams(double alpha) : alpha_(alpha) {
    require(alpha > 0.0 && alpha < 2.0, "alpha", "stability index must lie in (0,2)");
  }

  static StableParams from_subordinator_index(double beta) {
    require(beta > 0.0 && beta < 1.0, "beta", "subordinator index must lie in (0,1)");
    return StableParams(2.0 * beta);
  }

  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return alpha_ / 2.0; }

 private:
  double alpha_;
};

/// Discretized subordinator path: values[i] = S at grid[i].
struct SubordinatorPath {
  std::vector<double> grid;
  std::vector<double> values;

  std::size_t size() const noexcept { return grid.size(); }
  double horizon() const { return grid.back(); }
  double terminal() const { return values.back(); }
};

/// Throws unless `grid` starts at 0 and is strictly increasing.
inline void validate_time_grid(std::span<const double> grid, const char* field = "grid") {
  require(!grid.empty(), field, "empty time grid");
  require(grid.front() == 0.0, field, "time grid must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    require(grid[i] > grid[i - 1], field, "time grid must be strictly increasing");
}

inline std::vector<double> uniform_grid(double horizon, std::size_t steps) {
  require(horizon > 0.0, "t", "horizon must be positive");
  require(steps >= 1, "grid_size", "need at least one step");
  std::vector<double> grid(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    grid[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
  grid.back() = horizon;
  return grid;
}

inline void validate_subordinator_path(const SubordinatorPath& path) {
  validate_time_grid(path.grid);
  require(path.values.size() == path.grid.size(), "path", "values and grid differ in length");
  require(path.values.front() == 0.0, "path", "subordinator must start at 0");
  for (std::size_t i = 1; i < path.values.size(); ++i)
    require(path.values[i] >= path.values[i - 1], "path", "subordinator path must be nondecreasing");
}

/// One draw of S_1 with E exp(-lambda S_1) = exp(-lambda^beta).
///
/// Kanter's representation: with U uniform on (0, pi) and E unit exponential,
///   S = (a(U) / E)^((1-beta)/beta),
///   a(U) = sin((1-beta)U) sin(beta U)^(beta/(1-beta)) / sin(U)^(1/(1-beta)).
/// Evaluated in log space; a(U) stays finite as U -> 0.
inline double sample_positive_stable(const StableParams& params, RandomStream& stream) {
  const double beta = params.beta();
  const double u = std::numbers::pi * stream.uniform();
  const double e = stream.exponential();
  const double one_minus = 1.0 - beta;
  const double log_a = std::log(std::sin(one_minus * u)) +
                       (beta / one_minus) * std::log(std::sin(beta * u)) -
                       std::log(std::sin(u)) / one_minus;
  return std::exp((one_minus / beta) * (log_a - std::log(e)));
}

/// Increments over [t_i, t_{i+1}] are independent copies of
/// (t_{i+1}-t_i)^(1/beta) S_1.
inline SubordinatorPath sample_subordinator_path(const StableParams& params, std::span<const double> grid,
                                                 RandomStream& stream) {
  validate_time_grid(grid);
  SubordinatorPath path;
  path.grid.assign(grid.begin(), grid.end());
  path.values.assign(grid.size(), 0.0);
  const double inv_beta = 1.0 / params.beta();
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double dt = grid[i] - grid[i - 1];
    path.values[i] = path.values[i - 1] + std::pow(dt, inv_beta) * sample_positive_stable(params, stream);
  }
  return path;
}

/// In-place variant reusing `path`'s storage; the grid must already be set.
inline void resample_subordinator_values(const StableParams& params, SubordinatorPath& path,
                                         RandomStream& stream) {
  const double inv_beta = 1.0 / params.beta();
  path.values.resize(path.grid.size());
  path.values[0] = 0.0;
  for (std::size_t i = 1; i < path.grid.size(); ++i) {
    const double dt = path.grid[i] - path.grid[i - 1];
    path.values[i] = path.values[i - 1] + std::pow(dt, inv_beta) * sample_positive_stable(params, stream);
  }
}

/// Deterministic clock l_t = t, i.e. the Brownian (alpha = 2) baseline.
inline SubordinatorPath identity_clock(std::span<const double> grid) {
  validate_time_grid(grid);
  SubordinatorPath path;
  path.grid.assign(grid.begin(), grid.end());
  path.values = path.grid;
  return path;
}

/// Fills `out` (d x size) with W evaluated at the clock values; column 0 is 0.
inline void sample_brownian_on_clock(std::span<const double> clock, Eigen::Index d, RandomStream& stream,
                                     PathMatrix& out) {
  out.resize(d, static_cast<Eigen::Index>(clock.size()));
  out.col(0).setZero();
  for (std::size_t i = 1; i < clock.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const double ds = clock[i] - clock[i - 1];
    if (ds < kZeroIncrement) {
      out.col(c) = out.col(c - 1);
      continue;
    }
    const double scale = std::sqrt(ds);
    for (Eigen::Index k = 0; k < d; ++k) out(k, c) = out(k, c - 1) + scale * stream.normal();
  }
}

/// W_{S_{t_0}}, ..., W_{S_{t_m}} for an independent d-dimensional Brownian motion.
inline PathMatrix sample_brownian_at_subordinated_times(const SubordinatorPath& path, Eigen::Index d,
                                                        RandomStream& stream) {
  require(d >= 1, "dimension", "dimension must be at least 1");
  validate_subordinator_path(path);
  PathMatrix out;
  sample_brownian_on_clock(path.values, d, stream, out);
  return out;
}

/// Brownian motion observed at an arbitrary finite set of nonnegative times
/// (any order, duplicates allowed). Column j corresponds to times[j].
inline PathMatrix sample_brownian_at_times(std::span<const double> times, Eigen::Index d, RandomStream& stream) {
  require(d >= 1, "dimension", "dimension must be at least 1");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  PathMatrix out(d, static_cast<Eigen::Index>(times.size()));
  Eigen::VectorXd current = Eigen::VectorXd::Zero(d);
  double last = 0.0;
  for (std::size_t idx : order) {
    const double s = times[idx];
    require(s >= 0.0, "times", "Brownian times must be nonnegative");
    const double ds = s - last;
    if (ds >= kZeroIncrement) {
      const double scale = std::sqrt(ds);
      for (Eigen::Index k = 0; k < d; ++k) current(k) += scale * stream.normal();
      last = s;
    }
    out.col(static_cast<Eigen::Index>(idx)) = current;
  }
  return out;
}

/// Exact E S_t^{-r} = Gamma(r/beta) / (beta Gamma(r)) t^{-r/beta}.
inline double negative_moment_oracle(const StableParams& params, double r, double t) {
  require(r > 0.0, "r", "moment order must be positive");
  require(t > 0.0, "t", "time must be positive");
  const double beta = params.beta();
  return std::exp(std::lgamma(r / beta) - std::log(beta) - std::lgamma(r) - (r / beta) * std::log(t));
}

struct LaplaceCheckRow {
  double lambda = 0.0;
  double empirical = 0.0;
  double exact = 0.0;
  double std_err = 0.0;
  double z = 0.0;
};

/// Compares the sample mean of exp(-lambda S_1) with exp(-lambda^beta).
/// Sample i uses RandomStream(seed, i).
inline std::vector<LaplaceCheckRow> empirical_laplace_check(const StableParams& params,
                                                            std::span<const double> lambdas, std::size_t n,
                                                            std::uint64_t seed, unsigned workers = 1) {
  require(n >= 1000, "n_paths", "Laplace check needs at least 1000 samples");
  for (double l : lambdas) require(l >= 0.0, "lambdas", "Laplace arguments must be nonnegative");
  const std::size_t k = lambdas.size();
  const auto acc = block_reduce<MomentVector>(n, workers, make_no_workspace,
                                              [&](std::size_t i, MomentVector& m, NoWorkspace&) {
                                                m.resize(k);
                                                RandomStream stream(seed, i);
                                                const double s = sample_positive_stable(params, stream);
                                                for (std::size_t j = 0; j < k; ++j) m[j].add(std::exp(-lambdas[j] * s));
                                              });
  std::vector<LaplaceCheckRow> rows(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto& row = rows[j];
    row.lambda = lambdas[j];
    row.empirical = acc[j].mean;
    row.exact = std::exp(-std::pow(lambdas[j], params.beta()));
    row.std_err = acc[j].std_err();
    row.z = row.std_err > 0.0 ? (row.empirical - row.exact) / row.std_err : 0.0;
  }
  return rows;
}

}  // namespace stablebel
