#pragma once

// Spectral Galerkin simulation of dX = (AX + F(X)) dt + dL_{S_t} on [0,1]
// with Dirichlet Laplacian A e_k = -lambda_k e_k, lambda_k = pi^2 k^2,
// e_k(z) = sqrt(2) sin(pi k z), and L = sum_k beta_k W^k e_k.
// Everything runs on the first n Fourier coefficients.
//
// Noise layout: sample s draws its clock from RandomStream(seed, s*kMaxModes)
// and mode k (1-based) from RandomStream(seed, s*kMaxModes + k), so every
// truncation level n >= k sees the same W^k.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stablebel/bel.hpp"
#include "stablebel/error.hpp"
#include "stablebel/parallel.hpp"
#include "stablebel/random.hpp"
#include "stablebel/stable.hpp"
#include "stablebel/stats.hpp"

namespace stablebel {

inline constexpr std::uint64_t kMaxModes = 1U << 16;

inline double heat_eigenvalue(std::size_t k) {
  const double kk = static_cast<double>(k);
  return std::numbers::pi * std::numbers::pi * kk * kk;
}

/// e_k(z) = sqrt(2) sin(pi k z), k >= 1.
inline double heat_eigenfunction(std::size_t k, double zeta) {
  return std::numbers::sqrt2 * std::sin(std::numbers::pi * static_cast<double>(k) * zeta);
}

struct HeatEigenpairs {
  std::vector<double> lambdas;

  double eigenfunction(std::size_t k, double zeta) const { return heat_eigenfunction(k, zeta); }
};

inline HeatEigenpairs heat_eigenpairs(std::size_t n) {
  require(n >= 1, "spde.n", "truncation level must be at least 1");
  HeatEigenpairs pairs;
  for (std::size_t k = 1; k <= n; ++k) pairs.lambdas.push_back(heat_eigenvalue(k));
  return pairs;
}

/// u(z) = sum_k coeffs_k e_k(z) on each point of `zeta`.
inline std::vector<double> render_on_grid(const Eigen::Ref<const Vector>& coeffs, std::span<const double> zeta) {
  std::vector<double> u(zeta.size(), 0.0);
  for (std::size_t j = 0; j < zeta.size(); ++j)
    for (Eigen::Index k = 0; k < coeffs.size(); ++k)
      u[j] += coeffs(k) * heat_eigenfunction(static_cast<std::size_t>(k) + 1, zeta[j]);
  return u;
}

/// How the noise increment of one step enters a mode with decay rate lambda.
/// LeftEndpoint weights it by e^{-lambda dt}, the Ito left-point sum; modes with
/// lambda dt >> 1 then receive almost no noise. VarianceMatched weights it by
/// sqrt((1 - e^{-2 lambda dt}) / (2 lambda dt)), the root mean square of the
/// kernel over the step: exact in law for the Brownian clock, and unbiased for
/// Var(Z | S) because the clock's mass inside a step is uniform in expectation.
enum class NoiseQuadrature { LeftEndpoint, VarianceMatched };

inline const char* to_string(NoiseQuadrature q) noexcept {
  return q == NoiseQuadrature::LeftEndpoint ? "left-endpoint" : "variance-matched";
}

/// Weight of the step's noise increment; `decay` is e^{-z} for z = lambda dt.
inline double noise_gain(NoiseQuadrature q, double z, double decay) {
  if (q == NoiseQuadrature::LeftEndpoint) return decay;
  return std::sqrt(-std::expm1(-2.0 * z) / (2.0 * z));
}

class SpectralModel {
 public:
  SpectralModel(std::vector<double> lambdas, std::vector<double> betas, StableParams params)
      : lambdas_(std::move(lambdas)), betas_(std::move(betas)), params_(params) {
    require(!lambdas_.empty(), "spde.n", "truncation level must be at least 1");
    require(lambdas_.size() == betas_.size(), "spde.betas", "need one noise intensity per mode");
    require(lambdas_.size() < kMaxModes, "spde.n", "too many modes");
    for (std::size_t k = 0; k < lambdas_.size(); ++k) {
      require(lambdas_[k] > 0.0, "spde.lambdas", "eigenvalues must be positive");
      if (k > 0) require(lambdas_[k] >= lambdas_[k - 1], "spde.lambdas", "eigenvalues must be nondecreasing");
      require(betas_[k] >= 0.0 && std::isfinite(betas_[k]), "spde.betas", "noise intensities must be nonnegative");
    }
  }

  /// Heat spectrum with beta_k = beta for every mode.
  static SpectralModel heat(std::size_t n, double beta, StableParams params) {
    return SpectralModel(heat_eigenpairs(n).lambdas, std::vector<double>(n, beta), params);
  }

  std::size_t n() const noexcept { return lambdas_.size(); }
  const std::vector<double>& lambdas() const noexcept { return lambdas_; }
  const std::vector<double>& betas() const noexcept { return betas_; }
  const StableParams& params() const noexcept { return params_; }
  double delta() const { return *std::min_element(betas_.begin(), betas_.end()); }

  /// sum_k beta_k^2 / lambda_k over the first `upto` modes (all by default).
  double series_sum(std::size_t upto = static_cast<std::size_t>(-1)) const {
    double s = 0.0;
    for (std::size_t k = 0; k < std::min(upto, n()); ++k) s += betas_[k] * betas_[k] / lambdas_[k];
    return s;
  }

  SpectralModel truncated(std::size_t m) const {
    require(m >= 1 && m <= n(), "spde.n", "truncation level out of range");
    return SpectralModel({lambdas_.begin(), lambdas_.begin() + static_cast<std::ptrdiff_t>(m)},
                         {betas_.begin(), betas_.begin() + static_cast<std::ptrdiff_t>(m)}, params_)
        .with_noise_quadrature(quadrature_);
  }

  SpectralModel with_betas_scaled(double factor) const {
    auto b = betas_;
    for (auto& v : b) v *= factor;
    return SpectralModel(lambdas_, std::move(b), params_).with_noise_quadrature(quadrature_);
  }

  NoiseQuadrature noise_quadrature() const noexcept { return quadrature_; }
  SpectralModel with_noise_quadrature(NoiseQuadrature q) const {
    SpectralModel copy = *this;
    copy.quadrature_ = q;
    return copy;
  }

 private:
  std::vector<double> lambdas_;
  std::vector<double> betas_;
  StableParams params_;
  NoiseQuadrature quadrature_ = NoiseQuadrature::LeftEndpoint;
};

/// Nonlinearity in coefficient space. `eval` accepts any truncation size and
/// writes an output of the same size.
struct NonlinearityF {
  std::string name;
  std::function<void(const Vector&, Vector&)> eval;
  double lip_bound = 0.0;
  std::optional<double> sup_bound;
  std::size_t active_modes = 0;  // F_k vanishes for k > active_modes; 0 means all

  Vector operator()(const Vector& x) const {
    Vector out(x.size());
    eval(x, out);
    return out;
  }
};

namespace nonlinearities {

inline NonlinearityF zero() {
  return {"zero", [](const Vector&, Vector& out) { out.setZero(); }, 0.0, 0.0, 0};
}

/// F(x) = c, truncated or zero-padded to the size of x.
inline NonlinearityF constant(const Vector& c) {
  auto eval = [c](const Vector& x, Vector& out) {
    out.setZero();
    const Eigen::Index m = std::min(x.size(), c.size());
    out.head(m) = c.head(m);
  };
  return {"constant", eval, 0.0, c.norm(), static_cast<std::size_t>(c.size())};
}

/// F_k(x) = scale atan(x_k) for k <= active_modes (all modes when 0).
inline NonlinearityF arctan(double scale, std::size_t active_modes = 0) {
  auto eval = [scale, active_modes](const Vector& x, Vector& out) {
    const auto m = active_modes == 0 ? x.size() : std::min<Eigen::Index>(x.size(), static_cast<Eigen::Index>(active_modes));
    out.setZero();
    for (Eigen::Index k = 0; k < m; ++k) out(k) = scale * std::atan(x(k));
  };
  std::optional<double> sup;
  if (active_modes > 0) sup = std::abs(scale) * 0.5 * std::numbers::pi * std::sqrt(static_cast<double>(active_modes));
  return {"arctan", eval, std::abs(scale), sup, active_modes};
}

}  // namespace nonlinearities

/// Largest |F(x)-F(y)| / (lip_bound |x-y|) over random pairs in dimension n.
inline double lipschitz_ratio(const NonlinearityF& f, std::size_t n, RandomStream& stream, int pairs = 256) {
  double worst = 0.0;
  Vector x(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
  for (int p = 0; p < pairs; ++p) {
    const double scale = std::exp(4.0 * stream.uniform() - 2.0);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      x(k) = 3.0 * stream.normal();
      y(k) = x(k) + scale * stream.normal();
    }
    const double diff = (f(x) - f(y)).norm();
    const double dist = (x - y).norm();
    if (dist == 0.0) continue;
    if (f.lip_bound == 0.0) {
      if (diff > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    worst = std::max(worst, diff / (f.lip_bound * dist));
  }
  return worst;
}

struct SpdeNoise {
  std::uint64_t seed = 0;
  Driver driver = Driver::Subordinated;
};

inline std::uint64_t mode_stream_id(std::size_t sample, std::size_t k) {
  return static_cast<std::uint64_t>(sample) * kMaxModes + k;
}

/// Clock of `sample` on clock.grid (which must be set).
inline void sample_spde_clock(const StableParams& params, const SpdeNoise& noise, std::size_t sample,
                              SubordinatorPath& clock) {
  if (noise.driver == Driver::Brownian) {
    clock.values = clock.grid;
    return;
  }
  RandomStream stream(noise.seed, mode_stream_id(sample, 0));
  resample_subordinator_values(params, clock, stream);
}

/// Increments W^k_{clock_{i+1}} - W^k_{clock_i} for modes 1..n into row k-1 of `dw`.
inline void sample_mode_increments(const SpdeNoise& noise, std::size_t sample, std::size_t n,
                                   std::span<const double> clock, Matrix& dw) {
  const auto steps = static_cast<Eigen::Index>(clock.size()) - 1;
  dw.resize(static_cast<Eigen::Index>(n), steps);
  for (std::size_t k = 1; k <= n; ++k) {
    RandomStream stream(noise.seed, mode_stream_id(sample, k));
    const auto row = static_cast<Eigen::Index>(k) - 1;
    for (Eigen::Index i = 0; i < steps; ++i) {
      const double ds = clock[static_cast<std::size_t>(i + 1)] - clock[static_cast<std::size_t>(i)];
      dw(row, i) = ds < kZeroIncrement ? 0.0 : std::sqrt(ds) * stream.normal();
    }
  }
}

/// Stochastic convolution accumulated as Z_{i+1} = e^{-lambda dt} Z_i + g beta dW_i,
/// g = noise_gain(...). With the default left-endpoint gain this is exactly
/// sum_i beta_k e^{-lambda_k (t - t_i)} dW^k_i.
inline Vector stochastic_convolution(const SpectralModel& model, std::span<const double> grid,
                                     const Eigen::Ref<const Matrix>& dw) {
  const auto n = static_cast<Eigen::Index>(model.n());
  require(dw.rows() >= n && dw.cols() + 1 == static_cast<Eigen::Index>(grid.size()), "noise",
          "increments do not match the model and grid");
  Vector z = Vector::Zero(n);
  Vector decay(n);
  Vector gain(n);
  double cached_dt = -1.0;
  for (Eigen::Index i = 0; i + 1 < static_cast<Eigen::Index>(grid.size()); ++i) {
    const double dt = grid[static_cast<std::size_t>(i + 1)] - grid[static_cast<std::size_t>(i)];
    if (dt != cached_dt) {
      for (Eigen::Index k = 0; k < n; ++k) {
        const double zk = model.lambdas()[static_cast<std::size_t>(k)] * dt;
        decay(k) = std::exp(-zk);
        gain(k) = noise_gain(model.noise_quadrature(), zk, decay(k));
      }
      cached_dt = dt;
    }
    for (Eigen::Index k = 0; k < n; ++k)
      z(k) = decay(k) * z(k) + gain(k) * (model.betas()[static_cast<std::size_t>(k)] * dw(k, i));
  }
  return z;
}

namespace detail {

inline std::size_t grid_index_of(std::span<const double> grid, double t) {
  require(!grid.empty() && grid.back() >= t * (1.0 - 1e-12), "t", "grid does not cover [0, t]");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(grid[i] - t) <= 1e-12 * std::max(1.0, t)) return i;
  throw InvalidArgument("t", "t must be a grid point");
}

}  // namespace detail

/// Z^A_t for one sample, driven by the given subordinator path and the mode
/// streams of `sample`.
inline Vector sample_stochastic_convolution(const SpectralModel& model, double t, const SubordinatorPath& s_path,
                                            const SpdeNoise& noise, std::size_t sample) {
  validate_subordinator_path(s_path);
  const std::size_t last = detail::grid_index_of(s_path.grid, t);
  std::span<const double> grid(s_path.grid.data(), last + 1);
  std::span<const double> clock(s_path.values.data(), last + 1);
  Matrix dw;
  sample_mode_increments(noise, sample, model.n(), clock, dw);
  return stochastic_convolution(model, grid, dw);
}

/// Var(Z_k | S) of the discrete convolution. Left endpoint:
/// beta^2 sum_i e^{-2 lambda (t - t_i)} (S_{t_{i+1}} - S_{t_i}); otherwise each
/// term carries e^{-2 lambda (t - t_{i+1})} g^2 instead.
inline double conditional_convolution_variance(double lambda, double beta, const SubordinatorPath& s_path, double t,
                                               NoiseQuadrature q = NoiseQuadrature::LeftEndpoint) {
  const std::size_t last = detail::grid_index_of(s_path.grid, t);
  double v = 0.0;
  for (std::size_t i = 0; i < last; ++i) {
    const double ds = s_path.values[i + 1] - s_path.values[i];
    if (q == NoiseQuadrature::LeftEndpoint) {
      v += std::exp(-2.0 * lambda * (t - s_path.grid[i])) * ds;
    } else {
      const double z = lambda * (s_path.grid[i + 1] - s_path.grid[i]);
      const double g = noise_gain(q, z, std::exp(-z));
      v += std::exp(-2.0 * lambda * (t - s_path.grid[i + 1])) * g * g * ds;
    }
  }
  return beta * beta * v;
}

/// Var of Z_k when the clock is l_s = s: beta^2 (1 - e^{-2 lambda t}) / (2 lambda).
inline double brownian_convolution_variance(double lambda, double beta, double t) {
  return beta * beta * -std::expm1(-2.0 * lambda * t) / (2.0 * lambda);
}

struct SpdeRunConfig {
  std::size_t grid_size = 256;
  std::size_t n_samples = 10000;
  SpdeNoise noise;
  unsigned workers = 1;
};

struct ConvolutionSample {
  std::vector<double> values;             // coordinate k of Z_t per sample
  std::vector<double> conditional_std;    // sqrt(Var(Z_k | S)) per sample
};

/// Samples coordinate `mode` (0-based) of Z_t together with its conditional std.
inline ConvolutionSample sample_convolution_coordinate(const SpectralModel& model, std::size_t mode, double t,
                                                       const SpdeRunConfig& run) {
  require(mode < model.n(), "spde.mode", "mode out of range");
  struct Ws {
    SubordinatorPath clock;
    Matrix dw;
  };
  const auto sub = model.truncated(mode + 1);
  std::vector<double> stds(run.n_samples);
  auto values = block_map(run.n_samples, run.workers,
                          [&] {
                            Ws ws;
                            ws.clock.grid = uniform_grid(t, run.grid_size);
                            return ws;
                          },
                          [&](std::size_t s, Ws& ws) {
                            sample_spde_clock(model.params(), run.noise, s, ws.clock);
                            sample_mode_increments(run.noise, s, mode + 1, ws.clock.values, ws.dw);
                            stds[s] = std::sqrt(conditional_convolution_variance(
                                model.lambdas()[mode], model.betas()[mode], ws.clock, t, model.noise_quadrature()));
                            return stochastic_convolution(sub, ws.clock.grid, ws.dw)(static_cast<Eigen::Index>(mode));
                          });
  return {std::move(values), std::move(stds)};
}

struct ConvolutionMomentPoint {
  double t = 0.0;
  double moment = 0.0;  // MC E|Z_t|^p
  double std_err = 0.0;
  double bound_shape = 0.0;  // (sum beta^2/lambda)^{alpha/2} t^{1-alpha/2}
  double fitted_bound = 0.0;
};

struct ConvolutionMomentReport {
  std::vector<ConvolutionMomentPoint> points;
  double fitted_constant = 0.0;  // moment / shape at the smallest t
  double slack = 1.5;
  double slope = 0.0;            // log-log slope of the moment in t
  double slope_se = 0.0;
  bool bound_holds = false;
  bool monotone = false;
};

/// MC estimates of E|Z_t|^p over t_grid; the horizon t_grid[j] uses seed mix_seed(seed, j).
inline ConvolutionMomentReport convolution_moment_check(const SpectralModel& model, double p,
                                                        std::span<const double> t_grid, const SpdeRunConfig& run,
                                                        double slack = 1.5) {
  require(p > 0.0, "spde.p", "moment order must be positive");
  require(p < model.params().alpha(), "spde.p", "moment order must be below alpha (the moment may be infinite)");
  require(t_grid.size() >= 2, "t_grid", "need at least two horizons");
  std::vector<double> ts(t_grid.begin(), t_grid.end());
  std::sort(ts.begin(), ts.end());
  const double alpha = model.params().alpha();
  const double series = std::pow(model.series_sum(), alpha / 2.0);
  ConvolutionMomentReport report;
  report.slack = slack;
  std::vector<double> lx, ly;
  struct Ws {
    SubordinatorPath clock;
    Matrix dw;
  };
  for (std::size_t j = 0; j < ts.size(); ++j) {
    require(ts[j] > 0.0, "t_grid", "horizons must be positive");
    SpdeNoise noise = run.noise;
    noise.seed = mix_seed(run.noise.seed, j);
    const auto acc = block_reduce<RunningMoments>(
        run.n_samples, run.workers,
        [&] {
          Ws ws;
          ws.clock.grid = uniform_grid(ts[j], run.grid_size);
          return ws;
        },
        [&](std::size_t s, RunningMoments& m, Ws& ws) {
          sample_spde_clock(model.params(), noise, s, ws.clock);
          sample_mode_increments(noise, s, model.n(), ws.clock.values, ws.dw);
          m.add(std::pow(stochastic_convolution(model, ws.clock.grid, ws.dw).norm(), p));
        });
    ConvolutionMomentPoint point;
    point.t = ts[j];
    point.moment = acc.mean;
    point.std_err = acc.std_err();
    point.bound_shape = series * std::pow(ts[j], 1.0 - alpha / 2.0);
    report.points.push_back(point);
    lx.push_back(std::log(point.t));
    ly.push_back(std::log(point.moment));
  }
  report.fitted_constant = report.points.front().moment / report.points.front().bound_shape;
  report.bound_holds = true;
  report.monotone = true;
  for (std::size_t j = 0; j < report.points.size(); ++j) {
    auto& pt = report.points[j];
    pt.fitted_bound = report.fitted_constant * pt.bound_shape;
    if (pt.moment > slack * pt.fitted_bound) report.bound_holds = false;
    if (j > 0 && pt.moment < report.points[j - 1].moment) report.monotone = false;
  }
  const auto fit = least_squares(lx, ly);
  report.slope = fit.slope;
  report.slope_se = fit.slope_se;
  return report;
}

/// A_p = E|xi|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi) for a standard normal xi.
inline double gaussian_pth_moment(double p) {
  require(p > 0.0, "p", "moment order must be positive");
  if (p == std::floor(p) && static_cast<long>(p) % 2 == 0 && p <= 40.0) {
    double odd_factorial = 1.0;  // (p-1)!!, exact in double over this range
    for (long k = static_cast<long>(p) - 1; k > 1; k -= 2) odd_factorial *= static_cast<double>(k);
    return odd_factorial;
  }
  return std::pow(2.0, 0.5 * p) * std::tgamma(0.5 * (p + 1.0)) / std::sqrt(std::numbers::pi);
}

struct GaussianMomentCheck {
  double empirical = 0.0;
  double std_err = 0.0;
  double exact = 0.0;  // A_p (sum c_k^2)^{p/2}
};

/// MC of E|sum_k c_k xi_k|^p; sample i uses RandomStream(seed, i).
inline GaussianMomentCheck gaussian_moment_mc(std::span<const double> coeffs, double p, std::size_t n,
                                              std::uint64_t seed, unsigned workers = 1) {
  require(!coeffs.empty(), "coeffs", "need at least one coefficient");
  require(n >= 2, "n_samples", "need at least two samples");
  double norm2 = 0.0;
  for (double c : coeffs) norm2 += c * c;
  const auto acc = block_reduce<RunningMoments>(n, workers, make_no_workspace,
                                                [&](std::size_t i, RunningMoments& m, NoWorkspace&) {
                                                  RandomStream stream(seed, i);
                                                  double s = 0.0;
                                                  for (double c : coeffs) s += c * stream.normal();
                                                  m.add(std::pow(std::abs(s), p));
                                                });
  return {acc.mean, acc.std_err(), gaussian_pth_moment(p) * std::pow(norm2, p / 2.0)};
}

struct GalerkinState {
  std::vector<double> grid;
  Matrix coeffs;  // n x grid.size(); column i is X^n at grid[i]
};

/// Exponential Euler for the Galerkin system:
///   X_{i+1,k} = e^{-lambda_k dt} X_{i,k} + phi1(lambda_k dt) F_k(X_i) dt + g_k beta_k dW^k_i,
/// phi1(z) = (1 - e^{-z}) / z, g_k = noise_gain(...) as in stochastic_convolution. `dw` holds the unscaled mode increments (n x steps).
inline GalerkinState solve_mild_galerkin(const SpectralModel& model, const NonlinearityF& f,
                                         const Eigen::Ref<const Vector>& x, std::span<const double> grid,
                                         const Eigen::Ref<const Matrix>& dw) {
  validate_time_grid(grid);
  const auto n = static_cast<Eigen::Index>(model.n());
  require(x.size() == n, "x0", "initial coefficients do not match the truncation level");
  require(dw.rows() >= n && dw.cols() + 1 == static_cast<Eigen::Index>(grid.size()), "noise",
          "increments do not match the model and grid");
  GalerkinState state;
  state.grid.assign(grid.begin(), grid.end());
  const auto m = static_cast<Eigen::Index>(grid.size());
  state.coeffs.resize(n, m);
  state.coeffs.col(0) = x;
  Vector cur = x;
  Vector fx(n);
  Vector decay(n);
  Vector phi1(n);
  Vector gain(n);
  double cached_dt = -1.0;
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const double dt = grid[static_cast<std::size_t>(i + 1)] - grid[static_cast<std::size_t>(i)];
    if (dt != cached_dt) {
      for (Eigen::Index k = 0; k < n; ++k) {
        const double z = model.lambdas()[static_cast<std::size_t>(k)] * dt;
        decay(k) = std::exp(-z);
        phi1(k) = -std::expm1(-z) / z;
        gain(k) = noise_gain(model.noise_quadrature(), z, decay(k));
      }
      cached_dt = dt;
    }
    f.eval(cur, fx);
    for (Eigen::Index k = 0; k < n; ++k)
      cur(k) = decay(k) * cur(k) + phi1(k) * fx(k) * dt + gain(k) * (model.betas()[static_cast<std::size_t>(k)] * dw(k, i));
    if (!cur.allFinite() || cur.norm() > kOverflowGuard)
      throw NumericDivergence(grid[static_cast<std::size_t>(i + 1)], "Galerkin state diverged");
    state.coeffs.col(i + 1) = cur;
  }
  return state;
}

/// Pads or truncates x to length n.
inline Vector project_coefficients(const Eigen::Ref<const Vector>& x, std::size_t n) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(n));
  const auto m = std::min<Eigen::Index>(x.size(), static_cast<Eigen::Index>(n));
  out.head(m) = x.head(m);
  return out;
}

struct FellerGap {
  double gap = 0.0;         // |E f(X_t(x)) - E f(X_t(y))|
  double std_err = 0.0;
  double bound_scale = 0.0; // e^{Lip t} t^{-1/alpha} sup|f| |x - y|
  double effective_constant = 0.0;
  std::size_t n = 0;
};

/// Coupled estimate: both initial conditions use identical (S, W) for every sample.
inline FellerGap strong_feller_gap(const SpectralModel& model, const NonlinearityF& nonlinearity,
                                   const TestFunction& f, const Eigen::Ref<const Vector>& x,
                                   const Eigen::Ref<const Vector>& y, double t, const SpdeRunConfig& run) {
  require(f.sup_bound.has_value(), "f.sup_bound", "strong Feller gap needs a bounded test function");
  require(t > 0.0, "t", "horizon must be positive");
  const auto n = model.n();
  require(static_cast<std::size_t>(x.size()) == n && static_cast<std::size_t>(y.size()) == n, "x0",
          "initial coefficients do not match the truncation level");
  struct Ws {
    SubordinatorPath clock;
    Matrix dw;
  };
  const Vector xv = x;
  const Vector yv = y;
  const auto acc = block_reduce<RunningMoments>(
      run.n_samples, run.workers,
      [&] {
        Ws ws;
        ws.clock.grid = uniform_grid(t, run.grid_size);
        return ws;
      },
      [&](std::size_t s, RunningMoments& m, Ws& ws) {
        sample_spde_clock(model.params(), run.noise, s, ws.clock);
        sample_mode_increments(run.noise, s, n, ws.clock.values, ws.dw);
        const auto from_x = solve_mild_galerkin(model, nonlinearity, xv, ws.clock.grid, ws.dw);
        const auto from_y = solve_mild_galerkin(model, nonlinearity, yv, ws.clock.grid, ws.dw);
        const auto last = from_x.coeffs.cols() - 1;
        m.add(f(from_x.coeffs.col(last)) - f(from_y.coeffs.col(last)));
      });
  FellerGap out;
  out.gap = std::abs(acc.mean);
  out.std_err = acc.std_err();
  out.n = acc.count;
  out.bound_scale = std::exp(nonlinearity.lip_bound * t) * std::pow(t, -1.0 / model.params().alpha()) *
                    *f.sup_bound * (xv - yv).norm();
  out.effective_constant = out.bound_scale > 0.0 ? out.gap / out.bound_scale : 0.0;
  return out;
}

struct CauchyReport {
  std::vector<std::size_t> levels;
  std::vector<std::vector<double>> deviations;  // [pair j][sample]: |X^{n_{j+1}}_t - X^{n_j}_t|
  std::vector<double> medians;
  std::vector<double> tail_scale;               // sqrt(sum_{n_j < k <= n_{j+1}} beta_k^2 / lambda_k)
  double envelope_constant = 0.0;               // max_j median_j / tail_scale_j
  bool monotone = false;
};

/// Solves every truncation level on shared noise and compares consecutive
/// levels at time t. `model` must have at least max(levels) modes; x is
/// projected onto each level.
inline CauchyReport galerkin_convergence_check(const SpectralModel& model, std::vector<std::size_t> levels,
                                               const NonlinearityF& nonlinearity, const Eigen::Ref<const Vector>& x,
                                               double t, const SpdeRunConfig& run) {
  require(levels.size() >= 2, "spde.levels", "need at least two truncation levels");
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  require(levels.size() >= 2, "spde.levels", "need at least two distinct truncation levels");
  require(levels.front() >= 1 && levels.back() <= model.n(), "spde.levels", "truncation level out of range");
  std::vector<SpectralModel> models;
  std::vector<Vector> starts;
  for (auto lvl : levels) {
    models.push_back(model.truncated(lvl));
    starts.push_back(project_coefficients(x, lvl));
  }
  const std::size_t pairs = levels.size() - 1;
  CauchyReport report;
  report.levels = levels;
  report.deviations.assign(pairs, std::vector<double>(run.n_samples));
  struct Ws {
    SubordinatorPath clock;
    Matrix dw;
  };
  parallel_blocks(run.n_samples, kPathBlock, run.workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    Ws ws;
    ws.clock.grid = uniform_grid(t, run.grid_size);
    for (std::size_t s = begin; s < end; ++s) {
      sample_spde_clock(model.params(), run.noise, s, ws.clock);
      sample_mode_increments(run.noise, s, levels.back(), ws.clock.values, ws.dw);
      std::vector<Vector> finals;
      for (std::size_t j = 0; j < levels.size(); ++j) {
        const auto st = solve_mild_galerkin(models[j], nonlinearity, starts[j], ws.clock.grid,
                                            ws.dw.topRows(static_cast<Eigen::Index>(levels[j])));
        finals.push_back(st.coeffs.col(st.coeffs.cols() - 1));
      }
      for (std::size_t j = 0; j < pairs; ++j)
        report.deviations[j][s] = (finals[j + 1] - project_coefficients(finals[j], levels[j + 1])).norm();
    }
  });
  report.monotone = true;
  for (std::size_t j = 0; j < pairs; ++j) {
    report.medians.push_back(median(report.deviations[j]));
    const double tail = model.series_sum(levels[j + 1]) - model.series_sum(levels[j]);
    report.tail_scale.push_back(std::sqrt(std::max(tail, 0.0)));
    if (report.tail_scale.back() > 0.0)
      report.envelope_constant = std::max(report.envelope_constant, report.medians.back() / report.tail_scale.back());
    if (j > 0 && report.medians[j] > report.medians[j - 1]) report.monotone = false;
  }
  return report;
}

}  // namespace stablebel
