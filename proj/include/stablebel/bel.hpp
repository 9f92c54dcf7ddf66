#pragma once

// Monte Carlo gradient estimators for u(x) = E f(X_t(x)).
//
//   BEL-stable:          D_h u = E[ f(X_t) / S_t * int_0^t sigma^{-1} D_h X_s dW_{S_s} ]
//   BEL-brownian-For2:   same with S_t replaced by t (Brownian driver)
//   Bismut-For1:         D_h u = E[ f(X_t) / t * int_0^t sigma^{-1}(h + (t-s) grad b(X_s) h) dW_s ]
//   FD:                  central difference with common random numbers
//
// Each path samples its subordinator first and the Brownian values on that
// clock second, both from RandomStream(seed, path_index).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "stablebel/error.hpp"
#include "stablebel/parallel.hpp"
#include "stablebel/random.hpp"
#include "stablebel/sde.hpp"
#include "stablebel/stable.hpp"
#include "stablebel/stats.hpp"
#include "stablebel/timechange.hpp"

namespace stablebel {

/// Test function f with optional gradient and bounds.
struct TestFunction {
  std::string name;
  std::function<double(const Vector&)> f;
  std::function<Vector(const Vector&)> grad;  // empty for non-differentiable f
  std::optional<double> sup_bound;
  std::optional<double> lip_bound;
  bool smooth = true;  // false marks bounded-measurable test functions (informational runs)

  double operator()(const Vector& x) const { return f(x); }
};

namespace test_functions {

inline TestFunction constant(double c) {
  return {"constant", [c](const Vector&) { return c; },
          [](const Vector& x) { return Vector(Vector::Zero(x.size())); }, std::abs(c), 0.0, true};
}

inline TestFunction linear(const Vector& a) {
  return {"linear", [a](const Vector& x) { return a.dot(x); }, [a](const Vector&) { return a; }, std::nullopt,
          a.norm(), true};
}

/// f(x) = sum_i a_i atan(x_i): bounded and C^1_b.
inline TestFunction arctan(const Vector& a) {
  auto f = [a](const Vector& x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) s += a(i) * std::atan(x(i));
    return s;
  };
  auto g = [a](const Vector& x) {
    Vector out(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out(i) = a(i) / (1.0 + x(i) * x(i));
    return out;
  };
  return {"arctan", f, g, 0.5 * std::numbers::pi * a.cwiseAbs().sum(), a.norm(), true};
}

/// f(x) = exp(-|x - c|^2 / (2 w^2)).
inline TestFunction gaussian_bump(const Vector& center, double width) {
  require(width > 0.0, "f.width", "bump width must be positive");
  auto f = [center, width](const Vector& x) { return std::exp(-(x - center).squaredNorm() / (2.0 * width * width)); };
  auto g = [center, width](const Vector& x) {
    const double v = std::exp(-(x - center).squaredNorm() / (2.0 * width * width));
    return Vector(-v * (x - center) / (width * width));
  };
  return {"gaussian-bump", f, g, 1.0, std::exp(-0.5) / width, true};
}

/// f(x) = 1{a.x > threshold}; bounded measurable, not differentiable.
inline TestFunction step(const Vector& a, double threshold) {
  return {"step", [a, threshold](const Vector& x) { return a.dot(x) > threshold ? 1.0 : 0.0; }, {}, 1.0,
          std::nullopt, false};
}

}  // namespace test_functions

enum class EstimatorTag { BelStable, BelBrownianFor2, BismutFor1, FiniteDifference };

inline const char* to_string(EstimatorTag tag) noexcept {
  switch (tag) {
    case EstimatorTag::BelStable: return "BEL-stable";
    case EstimatorTag::BelBrownianFor2: return "BEL-brownian-For2";
    case EstimatorTag::BismutFor1: return "Bismut-For1";
    case EstimatorTag::FiniteDifference: return "FD";
  }
  return "?";
}

enum class Driver { Subordinated, Brownian };

struct EstimatorConfig {
  DriftModel drift;
  DiffusionMatrix diff;
  Vector x0;
  Vector h;
  double t = 1.0;
  StableParams params;
  std::size_t grid_size = 2048;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const {
    require(drift.dim >= 1, "dimension", "dimension must be at least 1");
    require(diff.dim() == drift.dim, "sigma", "sigma and drift differ in dimension");
    require(x0.size() == drift.dim, "x0", "initial point has the wrong dimension");
    require(h.size() == drift.dim, "h", "direction has the wrong dimension");
    require(t > 0.0, "t", "horizon must be positive");
    require(grid_size >= 2, "grid_size", "need at least two steps");
    require(n_paths >= 1, "n_paths", "need at least one path");
  }
};

struct GradientEstimate {
  EstimatorTag tag = EstimatorTag::BelStable;
  std::vector<double> value;    // one entry per direction
  std::vector<double> std_err;
  std::size_t n = 0;            // accepted paths
  std::size_t rejected = 0;
  bool weight_concentrated = false;  // top 0.1% of |weight| carries > 20% of the total
};

/// Left-point weight (1/S_t) sum <sigma^{-1} DX_i, dW_i>. Throws PathRejected if S_t = 0.
inline double pathwise_weight(const FlowState& flow, const DiffusionMatrix& diff, const SubordinatorPath& s_path,
                              const Eigen::Ref<const Matrix>& w_at_s) {
  require(s_path.size() == flow.grid.size(), "S", "subordinator path and flow use different grids");
  require(flow.DX.cols() == static_cast<Eigen::Index>(flow.grid.size()), "flow", "derivative flow not solved");
  if (!(s_path.terminal() > 0.0)) throw PathRejected("subordinator did not move before the horizon");
  const Matrix integrand = diff.sigma_inv() * flow.DX;
  return ito_integral_time_changed(integrand, s_path.values, w_at_s) / s_path.terminal();
}

/// Same weight computed by freezing a deterministic clock l, evaluating it on
/// the flow grid and integrating against W_l; with l = S this reproduces
/// pathwise_weight exactly.
inline double weight_on_frozen_clock(const FlowState& flow, const DiffusionMatrix& diff,
                                     const CadlagIncreasingPath& clock, const Eigen::Ref<const Matrix>& w_at_clock) {
  std::vector<double> clock_values(flow.grid.size());
  for (std::size_t i = 0; i < flow.grid.size(); ++i) clock_values[i] = clock.value(flow.grid[i]);
  if (!(clock_values.back() > 0.0)) throw PathRejected("clock did not move before the horizon");
  const Matrix integrand = diff.sigma_inv() * flow.DX;
  return ito_integral_time_changed(integrand, clock_values, w_at_clock) / clock_values.back();
}

namespace detail {

struct PathWorkspace {
  SubordinatorPath clock;
  Matrix w;
  FlowState flow;
  FlowState shifted;
  Vector drift_buf;
  Matrix jac_buf;
  Matrix dx;
  Matrix integrand;
};

inline PathWorkspace make_path_workspace(const EstimatorConfig& cfg, Driver driver) {
  PathWorkspace ws;
  const auto grid = uniform_grid(cfg.t, cfg.grid_size);
  ws.clock.grid = grid;
  ws.clock.values = driver == Driver::Brownian ? grid : std::vector<double>(grid.size(), 0.0);
  ws.flow.grid = grid;
  ws.shifted.grid = grid;
  ws.jac_buf.resize(cfg.drift.dim, cfg.drift.dim);
  return ws;
}

/// Samples the clock (unless Brownian) and then W on it.
inline void simulate_driver(const EstimatorConfig& cfg, Driver driver, std::size_t path, PathWorkspace& ws) {
  RandomStream stream(cfg.seed, path);
  if (driver == Driver::Subordinated) resample_subordinator_values(cfg.params, ws.clock, stream);
  sample_brownian_on_clock(ws.clock.values, cfg.drift.dim, stream, ws.w);
}

struct EstimatorAccumulator {
  MomentVector moments;
  std::size_t rejected = 0;

  void merge(const EstimatorAccumulator& other) {
    moments.merge(other.moments);
    rejected += other.rejected;
  }
};

inline bool weight_concentrated(std::vector<double> abs_weights) {
  if (abs_weights.empty()) return false;
  std::sort(abs_weights.begin(), abs_weights.end(), std::greater<>());
  const auto top = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.001 * abs_weights.size())));
  double top_sum = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < abs_weights.size(); ++i) {
    total += abs_weights[i];
    if (i < top) top_sum += abs_weights[i];
  }
  return total > 0.0 && top_sum > 0.2 * total;
}

inline GradientEstimate finish(EstimatorTag tag, const EstimatorAccumulator& acc, std::size_t n_dirs,
                               const std::vector<double>& abs_weights) {
  GradientEstimate est;
  est.tag = tag;
  est.rejected = acc.rejected;
  est.value.resize(n_dirs);
  est.std_err.resize(n_dirs);
  for (std::size_t j = 0; j < n_dirs; ++j) {
    if (j < acc.moments.components.size()) {
      est.value[j] = acc.moments[j].mean;
      est.std_err[j] = acc.moments[j].std_err();
      est.n = acc.moments[j].count;
    }
  }
  est.weight_concentrated = weight_concentrated(abs_weights);
  return est;
}

inline void validate_directions(const EstimatorConfig& cfg, std::span<const Vector> directions) {
  require(!directions.empty(), "h", "need at least one direction");
  for (const auto& h : directions) require(h.size() == cfg.drift.dim, "h", "direction has the wrong dimension");
}

}  // namespace detail

/// Weight-based estimator for every direction in `directions`, all sharing
/// the same paths (so the estimate is exactly linear in the direction).
inline GradientEstimate estimate_gradient(const EstimatorConfig& cfg, const TestFunction& f, EstimatorTag tag,
                                          std::span<const Vector> directions) {
  cfg.validate();
  detail::validate_directions(cfg, directions);
  require(tag != EstimatorTag::FiniteDifference, "estimator", "use fd_oracle for finite differences");
  const Driver driver = tag == EstimatorTag::BelStable ? Driver::Subordinated : Driver::Brownian;
  const std::size_t n_dirs = directions.size();
  std::vector<double> abs_weights(cfg.n_paths, 0.0);

  const auto acc = block_reduce<detail::EstimatorAccumulator>(
      cfg.n_paths, cfg.workers, [&] { return detail::make_path_workspace(cfg, driver); },
      [&](std::size_t path, detail::EstimatorAccumulator& a, detail::PathWorkspace& ws) {
        a.moments.resize(n_dirs);
        detail::simulate_driver(cfg, driver, path, ws);
        const double clock_end = ws.clock.terminal();
        if (!(clock_end > 0.0)) {
          ++a.rejected;
          return;
        }
        solve_sde_euler_into(cfg.drift, cfg.diff, cfg.x0, ws.w, ws.flow, ws.drift_buf);
        const auto m = static_cast<Eigen::Index>(ws.flow.grid.size());
        const double fx = f(ws.flow.X.col(m - 1));
        for (std::size_t j = 0; j < n_dirs; ++j) {
          const Vector& h = directions[j];
          if (tag == EstimatorTag::BismutFor1) {
            ws.integrand.resize(cfg.drift.dim, m);
            for (Eigen::Index i = 0; i < m; ++i) {
              const double ti = ws.flow.grid[static_cast<std::size_t>(i)];
              cfg.drift.eval_jacobian(ti, ws.flow.X.col(i), ws.jac_buf);
              ws.integrand.col(i) = cfg.diff.sigma_inv() * (h + (cfg.t - ti) * (ws.jac_buf * h));
            }
          } else {
            solve_variational_into(cfg.drift, ws.flow, h, ws.dx, ws.jac_buf);
            ws.integrand.noalias() = cfg.diff.sigma_inv() * ws.dx;
          }
          const double weight = ito_integral_time_changed(ws.integrand, ws.clock.values, ws.w) / clock_end;
          if (j == 0) abs_weights[path] = std::abs(weight);
          a.moments[j].add(fx * weight);
        }
      });
  return detail::finish(tag, acc, n_dirs, abs_weights);
}

inline GradientEstimate estimate_gradient_bel(const EstimatorConfig& cfg, const TestFunction& f) {
  const Vector dirs[] = {cfg.h};
  return estimate_gradient(cfg, f, EstimatorTag::BelStable, dirs);
}

inline GradientEstimate estimate_gradient_bel(const EstimatorConfig& cfg, const TestFunction& f,
                                              std::span<const Vector> directions) {
  return estimate_gradient(cfg, f, EstimatorTag::BelStable, directions);
}

inline GradientEstimate estimate_gradient_brownian_for2(const EstimatorConfig& cfg, const TestFunction& f) {
  const Vector dirs[] = {cfg.h};
  return estimate_gradient(cfg, f, EstimatorTag::BelBrownianFor2, dirs);
}

inline GradientEstimate estimate_gradient_bismut_for1(const EstimatorConfig& cfg, const TestFunction& f) {
  const Vector dirs[] = {cfg.h};
  return estimate_gradient(cfg, f, EstimatorTag::BismutFor1, dirs);
}

/// Central difference (E f(X_t(x+dh)) - E f(X_t(x-dh))) / (2d) where both
/// shifted solutions consume the identical (S, W) path.
inline GradientEstimate fd_oracle(const EstimatorConfig& cfg, const TestFunction& f, double fd_step,
                                  std::span<const Vector> directions, Driver driver = Driver::Subordinated) {
  cfg.validate();
  detail::validate_directions(cfg, directions);
  require(fd_step > 0.0, "fd.step", "finite-difference step must be positive");
  const std::size_t n_dirs = directions.size();
  const auto acc = block_reduce<detail::EstimatorAccumulator>(
      cfg.n_paths, cfg.workers, [&] { return detail::make_path_workspace(cfg, driver); },
      [&](std::size_t path, detail::EstimatorAccumulator& a, detail::PathWorkspace& ws) {
        a.moments.resize(n_dirs);
        detail::simulate_driver(cfg, driver, path, ws);
        const auto last = static_cast<Eigen::Index>(ws.flow.grid.size()) - 1;
        for (std::size_t j = 0; j < n_dirs; ++j) {
          solve_sde_euler_into(cfg.drift, cfg.diff, cfg.x0 + fd_step * directions[j], ws.w, ws.flow, ws.drift_buf);
          solve_sde_euler_into(cfg.drift, cfg.diff, cfg.x0 - fd_step * directions[j], ws.w, ws.shifted,
                               ws.drift_buf);
          a.moments[j].add((f(ws.flow.X.col(last)) - f(ws.shifted.X.col(last))) / (2.0 * fd_step));
        }
      });
  return detail::finish(EstimatorTag::FiniteDifference, acc, n_dirs, {});
}

inline GradientEstimate fd_oracle(const EstimatorConfig& cfg, const TestFunction& f, double fd_step = 1e-3) {
  const Vector dirs[] = {cfg.h};
  return fd_oracle(cfg, f, fd_step, dirs);
}

struct ScalingPoint {
  double t = 0.0;
  double moment = 0.0;   // (E|weight|^q)^{1/q}
  double std_err = 0.0;  // delta-method SE of `moment`
};

struct ScalingFit {
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
  std::vector<ScalingPoint> points;
};

/// Fits log (E|weight|^q)^{1/q} against log t. For b = 0 the slope is -1/alpha.
/// The run for t_grid[j] uses base seed mix_seed(cfg.seed, j).
inline ScalingFit weight_moment_scaling(const EstimatorConfig& cfg, double q, std::span<const double> t_grid) {
  require(q >= 1.0, "scaling.q", "moment order must be at least 1");
  require(t_grid.size() >= 3, "t_grid", "need at least three horizons");
  ScalingFit fit;
  std::vector<double> log_t;
  std::vector<double> log_m;
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    EstimatorConfig run = cfg;
    run.t = t_grid[j];
    run.seed = mix_seed(cfg.seed, j);
    run.validate();
    const auto acc = block_reduce<detail::EstimatorAccumulator>(
        run.n_paths, run.workers, [&] { return detail::make_path_workspace(run, Driver::Subordinated); },
        [&](std::size_t path, detail::EstimatorAccumulator& a, detail::PathWorkspace& ws) {
          a.moments.resize(1);
          detail::simulate_driver(run, Driver::Subordinated, path, ws);
          if (!(ws.clock.terminal() > 0.0)) {
            ++a.rejected;
            return;
          }
          solve_sde_euler_into(run.drift, run.diff, run.x0, ws.w, ws.flow, ws.drift_buf);
          solve_variational_into(run.drift, ws.flow, run.h, ws.dx, ws.jac_buf);
          ws.integrand.noalias() = run.diff.sigma_inv() * ws.dx;
          const double weight =
              ito_integral_time_changed(ws.integrand, ws.clock.values, ws.w) / ws.clock.terminal();
          a.moments[0].add(std::pow(std::abs(weight), q));
        });
    const double mean = acc.moments[0].mean;
    ScalingPoint point{run.t, std::pow(mean, 1.0 / q), 0.0};
    point.std_err = point.moment / (q * mean) * acc.moments[0].std_err();
    fit.points.push_back(point);
    log_t.push_back(std::log(point.t));
    log_m.push_back(std::log(point.moment));
  }
  const auto lf = least_squares(log_t, log_m);
  fit.slope = lf.slope;
  fit.slope_se = lf.slope_se;
  fit.intercept = lf.intercept;
  return fit;
}

struct TailFit {
  double exponent = 0.0;
  double exponent_se = 0.0;
  std::vector<double> lambdas;
  std::vector<double> tail_probability;  // P(sup_t |int h dW_S| >= lambda)
  std::vector<std::size_t> exceedances;
};

/// Samples sup over grid times of |int_0^t h dW_{S_s}| = |h . W_{S_t}|, one per path.
inline std::vector<double> sample_integral_suprema(const Vector& h, const EstimatorConfig& cfg) {
  cfg.validate();
  require(h.size() == cfg.drift.dim, "h", "integrand has the wrong dimension");
  return block_map(cfg.n_paths, cfg.workers, [&] { return detail::make_path_workspace(cfg, Driver::Subordinated); },
                   [&](std::size_t path, detail::PathWorkspace& ws) {
                     detail::simulate_driver(cfg, Driver::Subordinated, path, ws);
                     double sup = 0.0;
                     double running = 0.0;
                     for (Eigen::Index i = 0; i + 1 < ws.w.cols(); ++i) {
                       running += h.dot(ws.w.col(i + 1) - ws.w.col(i));
                       sup = std::max(sup, std::abs(running));
                     }
                     return sup;
                   });
}

/// Log-log regression of the empirical tail P(sup >= lambda) on the given
/// thresholds. Throws if the largest threshold has fewer than 100 exceedances.
inline TailFit fit_tail_exponent(std::vector<double> suprema, std::span<const double> lambdas) {
  require(lambdas.size() >= 2, "lambdas", "need at least two thresholds");
  std::sort(suprema.begin(), suprema.end());
  TailFit fit;
  std::vector<double> lx;
  std::vector<double> ly;
  const double n = static_cast<double>(suprema.size());
  for (double l : lambdas) {
    require(l > 0.0, "lambdas", "thresholds must be positive");
    const auto count =
        static_cast<std::size_t>(suprema.end() - std::lower_bound(suprema.begin(), suprema.end(), l));
    fit.lambdas.push_back(l);
    fit.exceedances.push_back(count);
    fit.tail_probability.push_back(static_cast<double>(count) / n);
  }
  const auto largest = std::max_element(fit.lambdas.begin(), fit.lambdas.end()) - fit.lambdas.begin();
  if (fit.exceedances[static_cast<std::size_t>(largest)] < 100)
    throw InvalidArgument("lambdas", "fewer than 100 exceedances at the largest threshold; widen the range or add paths");
  for (std::size_t i = 0; i < fit.lambdas.size(); ++i) {
    lx.push_back(std::log(fit.lambdas[i]));
    ly.push_back(std::log(fit.tail_probability[i]));
  }
  const auto lf = least_squares(lx, ly);
  fit.exponent = lf.slope;
  fit.exponent_se = lf.slope_se;
  return fit;
}

/// Tail exponent of sup |int h dW_S| with thresholds log-spaced between the
/// empirical q_lo and q_hi quantiles of the suprema.
inline TailFit gine_marcus_tail_check(const Vector& h, const EstimatorConfig& cfg, double q_lo = 0.9,
                                      double q_hi = 0.999, std::size_t n_lambdas = 16) {
  require(q_lo > 0.0 && q_lo < q_hi && q_hi < 1.0, "tail.quantiles", "need 0 < q_lo < q_hi < 1");
  require(n_lambdas >= 2, "tail.points", "need at least two thresholds");
  auto sups = sample_integral_suprema(h, cfg);
  std::vector<double> sorted = sups;
  std::sort(sorted.begin(), sorted.end());
  const double lo = quantile_sorted(sorted, q_lo);
  const double hi = quantile_sorted(sorted, q_hi);
  require(lo > 0.0 && hi > lo, "tail.quantiles", "degenerate quantile range");
  std::vector<double> lambdas(n_lambdas);
  for (std::size_t i = 0; i < n_lambdas; ++i)
    lambdas[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n_lambdas - 1));
  return fit_tail_exponent(std::move(sorted), lambdas);
}

}  // namespace stablebel
