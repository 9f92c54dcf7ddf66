#pragma once

// Config-driven experiment runner behind the `stablebel` executable.
//
// Every subcommand writes <out>/<subcommand>.csv: one '#' comment line with
// version, seed and config hash, a header row, then data rows. Numbers are
// printed with 17 significant digits, so identical (config, seed) runs give
// byte-identical files.
//
// Exit codes: 0 success, 1 comparison failure or unexpected error,
// 2 unknown subcommand or invalid config, 3 numeric divergence.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "stablebel/bel.hpp"
#include "stablebel/config.hpp"
#include "stablebel/error.hpp"
#include "stablebel/sde.hpp"
#include "stablebel/spde_heat.hpp"
#include "stablebel/stable.hpp"
#include "stablebel/timechange.hpp"

namespace stablebel {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {
      "sample-subordinator", "laplace-check", "simulate-sde", "estimate-gradient",
      "fd-oracle",           "gradient-scaling", "tail-check", "spde-convolution",
      "spde-solve",          "spde-gap",         "galerkin-cauchy", "timechange-demo"};
  return names;
}

struct CliOptions {
  std::string subcommand;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::string out_dir = ".";
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace cli {

inline std::string join(const Vector& v, char sep = ';') {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_number(v(i));
  }
  return s;
}

/// Vector of length dim; a single value is broadcast.
inline Vector vector_or_default(const RunConfig& cfg, const std::string& key, Eigen::Index dim, double fallback) {
  if (!cfg.has(key)) return Vector::Constant(dim, fallback);
  return cfg.get_vector(key, dim);
}

/// Vector zero-padded to dim.
inline Vector padded_vector(const RunConfig& cfg, const std::string& key, Eigen::Index dim, double fallback) {
  if (!cfg.has(key)) {
    Vector v = Vector::Zero(dim);
    v(0) = fallback;
    return v;
  }
  const Vector given = cfg.get_vector(key);
  if (given.size() > dim) throw InvalidArgument(key, "more entries than the dimension");
  Vector v = Vector::Zero(dim);
  v.head(given.size()) = given;
  return v;
}

inline Eigen::Index dimension(const RunConfig& cfg) {
  const auto d = cfg.get_uint("dimension", 1);
  require(d >= 1 && d <= 4096, "dimension", "dimension must be in [1, 4096]");
  return static_cast<Eigen::Index>(d);
}

inline DriftModel make_drift(const RunConfig& cfg, Eigen::Index d) {
  const auto name = cfg.get_string("drift", "zero");
  if (name == "zero") return drifts::zero(d);
  if (name == "ou") return drifts::ou(cfg.get_double("drift.kappa"), d);
  if (name == "linear") {
    const Matrix a = cfg.get_matrix("drift.matrix");
    if (a.rows() != d || a.cols() != d) throw InvalidArgument("drift.matrix", "matrix must be dimension x dimension");
    return drifts::linear(a);
  }
  if (name == "rotating") return drifts::rotating(cfg.get_double("drift.omega"), d);
  if (name == "arctan-bounded")
    return drifts::arctan_bounded(cfg.get_double("drift.theta"), cfg.get_double("drift.coupling", 0.0), d);
  throw InvalidArgument("drift", "unknown drift '" + name + "'");
}

inline DiffusionMatrix make_sigma(const RunConfig& cfg, Eigen::Index d) {
  if (cfg.has("sigma.matrix")) {
    const Matrix s = cfg.get_matrix("sigma.matrix");
    if (s.rows() != d || s.cols() != d) throw InvalidArgument("sigma.matrix", "matrix must be dimension x dimension");
    return DiffusionMatrix(s);
  }
  return DiffusionMatrix::diagonal(vector_or_default(cfg, "sigma", d, 1.0));
}

/// f.a is zero-padded to the dimension.
inline TestFunction make_test_function(const RunConfig& cfg, Eigen::Index d) {
  const auto name = cfg.get_string("f", "linear");
  if (name == "constant") return test_functions::constant(cfg.get_double("f.c", 1.0));
  if (name == "linear") return test_functions::linear(padded_vector(cfg, "f.a", d, 1.0));
  if (name == "arctan") return test_functions::arctan(padded_vector(cfg, "f.a", d, 1.0));
  if (name == "gaussian-bump")
    return test_functions::gaussian_bump(vector_or_default(cfg, "f.center", d, 0.0), cfg.get_double("f.width", 1.0));
  if (name == "step") return test_functions::step(padded_vector(cfg, "f.a", d, 1.0), cfg.get_double("f.threshold", 0.0));
  throw InvalidArgument("f", "unknown test function '" + name + "'");
}

inline StableParams make_params(const RunConfig& cfg) {
  const double alpha = cfg.get_double("alpha");
  require(alpha > 0.0 && alpha < 2.0, "alpha", "stability index must lie in (0,2)");
  return StableParams(alpha);
}

inline std::size_t positive_count(const RunConfig& cfg, const std::string& key, std::uint64_t fallback) {
  const auto v = cfg.get_uint(key, fallback);
  if (v < 1) throw InvalidArgument(key, "must be at least 1");
  return static_cast<std::size_t>(v);
}

inline EstimatorConfig make_estimator(const RunConfig& cfg, std::uint64_t seed, unsigned workers) {
  const auto d = dimension(cfg);
  EstimatorConfig ec{make_drift(cfg, d),
                     make_sigma(cfg, d),
                     vector_or_default(cfg, "x0", d, 0.0),
                     padded_vector(cfg, "h", d, 1.0),
                     cfg.get_double("t", 1.0),
                     make_params(cfg),
                     positive_count(cfg, "grid_size", 2048),
                     positive_count(cfg, "n_paths", 100000),
                     seed,
                     workers};
  ec.validate();
  return ec;
}

inline std::vector<double> t_grid(const RunConfig& cfg) {
  if (cfg.has("t_grid")) return cfg.get_list("t_grid");
  const double lo = cfg.get_double("t_grid.min");
  const double hi = cfg.get_double("t_grid.max");
  const auto n = positive_count(cfg, "t_grid.points", 5);
  require(lo > 0.0 && hi > lo, "t_grid.min", "need 0 < t_grid.min < t_grid.max");
  std::vector<double> ts(n);
  for (std::size_t i = 0; i < n; ++i)
    ts[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  return ts;
}

inline SpectralModel make_spectral_model(const RunConfig& cfg) {
  const auto n = positive_count(cfg, "spde.n", 20);
  std::vector<double> betas;
  if (cfg.has("spde.betas")) {
    betas = cfg.get_list("spde.betas");
    if (betas.size() == 1) betas.assign(n, betas[0]);
    if (betas.size() != n) throw InvalidArgument("spde.betas", "need one intensity per mode");
  } else {
    betas.assign(n, cfg.get_double("spde.beta", 1.0));
  }
  if (cfg.has("spde.noisy_modes")) {
    const auto active = cfg.get_uint("spde.noisy_modes");
    for (std::size_t k = active; k < n; ++k) betas[k] = 0.0;
  }
  const auto quadrature = cfg.get_string("spde.noise_quadrature", "left-endpoint");
  if (quadrature != "left-endpoint" && quadrature != "variance-matched")
    throw InvalidArgument("spde.noise_quadrature", "expected left-endpoint or variance-matched");
  return SpectralModel(heat_eigenpairs(n).lambdas, std::move(betas), make_params(cfg))
      .with_noise_quadrature(quadrature == "left-endpoint" ? NoiseQuadrature::LeftEndpoint
                                                           : NoiseQuadrature::VarianceMatched);
}

inline NonlinearityF make_nonlinearity(const RunConfig& cfg, std::size_t n) {
  const auto name = cfg.get_string("spde.F", "zero");
  if (name == "zero") return nonlinearities::zero();
  if (name == "constant") return nonlinearities::constant(vector_or_default(cfg, "spde.F.c", static_cast<Eigen::Index>(n), 1.0));
  if (name == "arctan")
    return nonlinearities::arctan(cfg.get_double("spde.F.scale", 0.5), cfg.get_uint("spde.F.modes", 0));
  throw InvalidArgument("spde.F", "unknown nonlinearity '" + name + "'");
}

inline SpdeRunConfig make_spde_run(const RunConfig& cfg, std::uint64_t seed, unsigned workers) {
  SpdeRunConfig run;
  run.grid_size = positive_count(cfg, "grid_size", 256);
  run.n_samples = positive_count(cfg, "n_paths", 10000);
  run.noise.seed = seed;
  run.workers = workers;
  const auto driver = cfg.get_string("spde.driver", "subordinated");
  if (driver == "brownian") run.noise.driver = Driver::Brownian;
  else if (driver != "subordinated") throw InvalidArgument("spde.driver", "expected 'subordinated' or 'brownian'");
  return run;
}

class Artifact {
 public:
  Artifact(const std::filesystem::path& path, std::uint64_t seed, const std::string& hash,
           const std::string& header)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << "# stablebel version=" << kVersion << " seed=" << seed << " config_hash=" << hash << '\n';
    out_ << header << '\n';
  }

  template <class... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(fields), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class Int, class = std::enable_if_t<std::is_integral_v<Int>>>
  static std::string cell(Int v) { return std::to_string(v); }

  std::ofstream out_;
};

inline constexpr const char* kGradientHeader = "estimator_tag,direction,value,std_err,n,t,alpha,seed";
inline constexpr const char* kQuantityHeader = "t,n,quantity,value,std_err";

struct RunContext {
  const RunConfig& cfg;
  std::uint64_t seed;
  unsigned workers;
  std::filesystem::path out_dir;
  std::string hash;

  Artifact artifact(const std::string& name, const std::string& header) const {
    return Artifact(out_dir / (name + ".csv"), seed, hash, header);
  }
};

inline void run_sample_subordinator(const RunContext& ctx) {
  const auto params = make_params(ctx.cfg);
  const auto n = positive_count(ctx.cfg, "n_paths", 10);
  const auto grid = uniform_grid(ctx.cfg.get_double("t", 1.0), positive_count(ctx.cfg, "grid_size", 256));
  auto out = ctx.artifact("sample-subordinator", "sample,t,value");
  for (std::size_t p = 0; p < n; ++p) {
    RandomStream stream(ctx.seed, p);
    const auto path = sample_subordinator_path(params, grid, stream);
    for (std::size_t i = 0; i < grid.size(); ++i) out.row(p, grid[i], path.values[i]);
  }
}

inline void run_laplace_check(const RunContext& ctx) {
  const auto params = make_params(ctx.cfg);
  const auto lambdas = ctx.cfg.has("lambdas") ? ctx.cfg.get_list("lambdas") : std::vector<double>{0.25, 1.0, 4.0};
  const auto n = positive_count(ctx.cfg, "n_paths", 1000000);
  const auto rows = empirical_laplace_check(params, lambdas, n, ctx.seed, ctx.workers);
  auto out = ctx.artifact("laplace-check", "lambda,empirical,exact,std_err,z");
  for (const auto& r : rows) out.row(r.lambda, r.empirical, r.exact, r.std_err, r.z);
}

inline void run_simulate_sde(const RunContext& ctx) {
  auto ec = make_estimator(ctx.cfg, ctx.seed, ctx.workers);
  const auto path_index = ctx.cfg.get_uint("path", 0);
  const auto grid = uniform_grid(ec.t, ec.grid_size);
  RandomStream stream(ec.seed, path_index);
  const auto s_path = sample_subordinator_path(ec.params, grid, stream);
  const auto w = sample_brownian_at_subordinated_times(s_path, ec.drift.dim, stream);
  auto flow = solve_variational(ec.drift, solve_sde_euler(ec.drift, ec.diff, ec.x0, grid, w), ec.h);
  std::ofstream out(ctx.out_dir / "simulate-sde.csv");
  out << "# stablebel version=" << kVersion << " seed=" << ctx.seed << " config_hash=" << ctx.hash << '\n';
  write_flow_csv(out, flow);
}

inline void write_gradient(Artifact& out, const GradientEstimate& est, const EstimatorConfig& ec,
                           const std::vector<Vector>& dirs) {
  for (std::size_t j = 0; j < est.value.size(); ++j)
    out.row(std::string(to_string(est.tag)), join(dirs[j]), est.value[j], est.std_err[j], est.n, ec.t,
            ec.params.alpha(), ec.seed);
}

inline std::vector<Vector> directions(const RunConfig& cfg, const EstimatorConfig& ec) {
  if (cfg.get_string("directions", "h") == "basis") {
    std::vector<Vector> dirs;
    for (Eigen::Index i = 0; i < ec.drift.dim; ++i) dirs.push_back(Vector::Unit(ec.drift.dim, i));
    return dirs;
  }
  return {ec.h};
}

inline void run_estimate_gradient(const RunContext& ctx) {
  const auto ec = make_estimator(ctx.cfg, ctx.seed, ctx.workers);
  const auto f = make_test_function(ctx.cfg, ec.drift.dim);
  const auto dirs = directions(ctx.cfg, ec);
  const auto name = ctx.cfg.get_string("estimator", "bel");
  EstimatorTag tag = EstimatorTag::BelStable;
  if (name == "for2") tag = EstimatorTag::BelBrownianFor2;
  else if (name == "for1") tag = EstimatorTag::BismutFor1;
  else if (name != "bel") throw InvalidArgument("estimator", "expected bel, for2 or for1");
  const auto est = estimate_gradient(ec, f, tag, dirs);
  auto out = ctx.artifact("estimate-gradient", kGradientHeader);
  write_gradient(out, est, ec, dirs);
}

inline void run_fd_oracle(const RunContext& ctx) {
  const auto ec = make_estimator(ctx.cfg, ctx.seed, ctx.workers);
  const auto f = make_test_function(ctx.cfg, ec.drift.dim);
  const auto dirs = directions(ctx.cfg, ec);
  const auto driver = ctx.cfg.get_string("estimator", "bel") == "bel" ? Driver::Subordinated : Driver::Brownian;
  const auto est = fd_oracle(ec, f, ctx.cfg.get_double("fd.step", 1e-3), dirs, driver);
  auto out = ctx.artifact("fd-oracle", kGradientHeader);
  write_gradient(out, est, ec, dirs);
}

inline void run_gradient_scaling(const RunContext& ctx) {
  const auto ec = make_estimator(ctx.cfg, ctx.seed, ctx.workers);
  const auto ts = t_grid(ctx.cfg);
  const auto fit = weight_moment_scaling(ec, ctx.cfg.get_double("scaling.q", 1.0), ts);
  auto out = ctx.artifact("gradient-scaling", kQuantityHeader);
  for (const auto& p : fit.points) out.row(p.t, ec.n_paths, "weight_moment", p.moment, p.std_err);
  out.row(0.0, ec.n_paths, "slope", fit.slope, fit.slope_se);
  out.row(0.0, ec.n_paths, "slope_target", -1.0 / ec.params.alpha(), 0.0);
}

inline void run_tail_check(const RunContext& ctx) {
  const auto ec = make_estimator(ctx.cfg, ctx.seed, ctx.workers);
  const auto fit = gine_marcus_tail_check(ec.h, ec, ctx.cfg.get_double("tail.q_lo", 0.99),
                                          ctx.cfg.get_double("tail.q_hi", 0.9995),
                                          positive_count(ctx.cfg, "tail.points", 16));
  auto out = ctx.artifact("tail-check", kQuantityHeader);
  for (std::size_t i = 0; i < fit.lambdas.size(); ++i)
    out.row(ec.t, ec.n_paths, "tail_probability[lambda=" + format_number(fit.lambdas[i]) + "]",
            fit.tail_probability[i],
            std::sqrt(fit.tail_probability[i] * (1.0 - fit.tail_probability[i]) / static_cast<double>(ec.n_paths)));
  out.row(ec.t, ec.n_paths, "exponent", fit.exponent, fit.exponent_se);
  out.row(ec.t, ec.n_paths, "exponent_target", -ec.params.alpha(), 0.0);
}

inline void run_spde_convolution(const RunContext& ctx) {
  const auto model = make_spectral_model(ctx.cfg);
  const auto run = make_spde_run(ctx.cfg, ctx.seed, ctx.workers);
  auto out = ctx.artifact("spde-convolution", kQuantityHeader);
  const double p = ctx.cfg.get_double("spde.p", 1.0);
  const auto report = convolution_moment_check(model, p, t_grid(ctx.cfg), run, ctx.cfg.get_double("spde.slack", 1.5));
  for (const auto& pt : report.points) {
    out.row(pt.t, run.n_samples, "moment_p", pt.moment, pt.std_err);
    out.row(pt.t, run.n_samples, "fitted_bound", pt.fitted_bound, 0.0);
  }
  out.row(0.0, run.n_samples, "fitted_constant", report.fitted_constant, 0.0);
  out.row(0.0, run.n_samples, "slope", report.slope, report.slope_se);
  out.row(0.0, run.n_samples, "bound_holds", report.bound_holds ? 1.0 : 0.0, 0.0);
  out.row(0.0, run.n_samples, "series_sum", model.series_sum(), 0.0);
  const double t = ctx.cfg.get_double("t", 1.0);
  const auto coord = sample_convolution_coordinate(model, 0, t, run);
  RunningMoments m;
  for (double v : coord.values) m.add(v);
  RunningMoments sq;
  for (double v : coord.values) sq.add((v - m.mean) * (v - m.mean));
  out.row(t, run.n_samples, "coordinate_variance", m.variance(), sq.std_err());
  if (run.noise.driver == Driver::Brownian)
    out.row(t, run.n_samples, "coordinate_variance_exact",
            brownian_convolution_variance(model.lambdas()[0], model.betas()[0], t), 0.0);
}

inline void run_spde_solve(const RunContext& ctx) {
  const auto model = make_spectral_model(ctx.cfg);
  const auto run = make_spde_run(ctx.cfg, ctx.seed, ctx.workers);
  const auto nl = make_nonlinearity(ctx.cfg, model.n());
  const auto n = static_cast<Eigen::Index>(model.n());
  const Vector x = vector_or_default(ctx.cfg, "spde.x0", n, 0.0);
  const double t = ctx.cfg.get_double("t", 1.0);
  const auto sample = ctx.cfg.get_uint("path", 0);
  SubordinatorPath clock;
  clock.grid = uniform_grid(t, run.grid_size);
  sample_spde_clock(model.params(), run.noise, sample, clock);
  Matrix dw;
  sample_mode_increments(run.noise, sample, model.n(), clock.values, dw);
  const auto state = solve_mild_galerkin(model, nl, x, clock.grid, dw);
  auto out = ctx.artifact("spde-solve", kQuantityHeader);
  for (std::size_t i = 0; i < state.grid.size(); ++i)
    for (Eigen::Index k = 0; k < n; ++k)
      out.row(state.grid[i], model.n(), "coeff_" + std::to_string(k + 1), state.coeffs(k, static_cast<Eigen::Index>(i)), 0.0);
  const auto points = positive_count(ctx.cfg, "render.points", 101);
  std::vector<double> zeta(points);
  for (std::size_t j = 0; j < points; ++j) zeta[j] = points == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(points - 1);
  const auto u = render_on_grid(state.coeffs.col(state.coeffs.cols() - 1), zeta);
  auto render = ctx.artifact("spde-solve-render", "zeta,u");
  for (std::size_t j = 0; j < points; ++j) render.row(zeta[j], u[j]);
}

inline void run_spde_gap(const RunContext& ctx) {
  const auto model = make_spectral_model(ctx.cfg);
  const auto run = make_spde_run(ctx.cfg, ctx.seed, ctx.workers);
  const auto nl = make_nonlinearity(ctx.cfg, model.n());
  const auto n = static_cast<Eigen::Index>(model.n());
  const auto f = make_test_function(ctx.cfg, n);
  const Vector x = vector_or_default(ctx.cfg, "spde.x0", n, 0.0);
  const Vector y = ctx.cfg.has("spde.y") ? vector_or_default(ctx.cfg, "spde.y", n, 0.0)
                                         : Vector(x + ctx.cfg.get_double("spde.distance", 1e-2) * Vector::Unit(n, 0));
  const auto ts = ctx.cfg.has("t_grid") || ctx.cfg.has("t_grid.min") ? t_grid(ctx.cfg)
                                                                       : std::vector<double>{ctx.cfg.get_double("t", 1.0)};
  auto out = ctx.artifact("spde-gap", kQuantityHeader);
  for (double t : ts) {
    const auto gap = strong_feller_gap(model, nl, f, x, y, t, run);
    out.row(t, run.n_samples, "gap", gap.gap, gap.std_err);
    out.row(t, run.n_samples, "effective_constant", gap.effective_constant,
            gap.bound_scale > 0.0 ? gap.std_err / gap.bound_scale : 0.0);
  }
}

inline void run_galerkin_cauchy(const RunContext& ctx) {
  auto levels_raw = ctx.cfg.has("spde.levels") ? ctx.cfg.get_list("spde.levels") : std::vector<double>{8, 16, 32, 64};
  std::vector<std::size_t> levels;
  for (double l : levels_raw) {
    if (!(l >= 1.0) || l != std::floor(l)) throw InvalidArgument("spde.levels", "levels must be positive integers");
    levels.push_back(static_cast<std::size_t>(l));
  }
  RunConfig cfg = ctx.cfg;
  std::size_t top = 1;
  for (auto l : levels) top = std::max(top, l);
  if (!cfg.has("spde.n")) cfg.set("spde.n", std::to_string(top));
  const auto model = make_spectral_model(cfg);
  const auto run = make_spde_run(cfg, ctx.seed, ctx.workers);
  const auto nl = make_nonlinearity(cfg, model.n());
  const Vector x = vector_or_default(cfg, "spde.x0", static_cast<Eigen::Index>(model.n()), 0.0);
  const double t = cfg.get_double("t", 1.0);
  const auto report = galerkin_convergence_check(model, levels, nl, x, t, run);
  auto out = ctx.artifact("galerkin-cauchy", kQuantityHeader);
  for (std::size_t j = 0; j < report.medians.size(); ++j) {
    const std::string pair = std::to_string(report.levels[j]) + "->" + std::to_string(report.levels[j + 1]);
    out.row(t, report.levels[j + 1], "median_deviation[" + pair + "]", report.medians[j], 0.0);
    out.row(t, report.levels[j + 1], "tail_scale[" + pair + "]", report.tail_scale[j], 0.0);
  }
  out.row(t, model.n(), "envelope_constant", report.envelope_constant, 0.0);
  out.row(t, model.n(), "monotone", report.monotone ? 1.0 : 0.0, 0.0);
}

inline void run_timechange_demo(const RunContext& ctx) {
  const double eps = ctx.cfg.get_double("epsilon", 1e-2);
  std::optional<CadlagIncreasingPath> clock;
  if (ctx.cfg.has("clock.file")) {
    std::ifstream in(ctx.cfg.get_string("clock.file"));
    if (!in) throw InvalidArgument("clock.file", "cannot open clock file");
    clock = read_path_csv(in);
  } else {
    const auto params = make_params(ctx.cfg);
    const auto grid = uniform_grid(ctx.cfg.get_double("t", 1.0), positive_count(ctx.cfg, "grid_size", 64));
    RandomStream stream(ctx.seed, ctx.cfg.get_uint("path", 0));
    clock = CadlagIncreasingPath::from_subordinator(sample_subordinator_path(params, grid, stream));
  }
  const double horizon = clock->domain_end();
  const auto extended = clock->extended_to(horizon + eps);
  const auto smoothed = smooth(extended, eps);
  const auto inverse = invert(smoothed);
  const auto points = positive_count(ctx.cfg, "render.points", 201);
  auto out = ctx.artifact("timechange-demo", "t,clock,smoothed,derivative,roundtrip_error");
  for (std::size_t j = 0; j < points; ++j) {
    const double t = points == 1 ? 0.0 : horizon * static_cast<double>(j) / static_cast<double>(points - 1);
    const double v = smoothed.value(t);
    out.row(t, extended.value(t), v, smoothed.derivative(t), std::abs(inverse.value(v) - t));
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("artifact", "cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (table.header.empty()) table.header = split_csv_line(line);
    else table.rows.push_back(split_csv_line(line));
  }
  if (table.header.empty()) throw InvalidArgument("artifact", "'" + path + "' has no header row");
  return table;
}

}  // namespace cli

/// Row-by-row z = (value_a - value_b) / sqrt(se_a^2 + se_b^2). Fails when any
/// |z| exceeds `threshold`. Both artifacts need `value` and `std_err` columns
/// and an identical header.
inline int compare_artifacts(const std::string& path_a, const std::string& path_b, double threshold,
                             std::ostream& report) {
  const auto a = cli::read_csv(path_a);
  const auto b = cli::read_csv(path_b);
  if (a.header != b.header) throw InvalidArgument("artifact", "schema mismatch between artifacts");
  if (a.rows.size() != b.rows.size()) throw InvalidArgument("artifact", "artifacts differ in row count");
  std::size_t vcol = a.header.size();
  std::size_t scol = a.header.size();
  for (std::size_t i = 0; i < a.header.size(); ++i) {
    if (a.header[i] == "value") vcol = i;
    if (a.header[i] == "std_err") scol = i;
  }
  if (vcol == a.header.size() || scol == a.header.size())
    throw InvalidArgument("artifact", "schema lacks value/std_err columns");
  bool pass = true;
  report << "row,value_a,value_b,combined_se,z\n";
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    const auto& ra = a.rows[r];
    const auto& rb = b.rows[r];
    if (ra.size() != a.header.size() || rb.size() != a.header.size())
      throw InvalidArgument("artifact", "row " + std::to_string(r) + " has the wrong number of cells");
    const double va = detail::parse_double("value", ra[vcol]);
    const double vb = detail::parse_double("value", rb[vcol]);
    const double se = std::hypot(detail::parse_double("std_err", ra[scol]), detail::parse_double("std_err", rb[scol]));
    double z = 0.0;
    if (va != vb) z = se > 0.0 ? (va - vb) / se : std::copysign(std::numeric_limits<double>::infinity(), va - vb);
    if (!(std::abs(z) <= threshold)) pass = false;
    report << r << ',' << format_number(va) << ',' << format_number(vb) << ',' << format_number(se) << ','
           << format_number(z) << '\n';
  }
  report << (pass ? "PASS" : "FAIL") << " threshold=" << format_number(threshold) << '\n';
  return pass ? 0 : 1;
}

/// Runs one subcommand; returns the process exit code and prints a one-line
/// diagnostic to `err` on failure.
inline int run(const CliOptions& opts, std::ostream& err) {
  using Handler = void (*)(const cli::RunContext&);
  static const std::map<std::string, Handler> handlers = {
      {"sample-subordinator", cli::run_sample_subordinator},
      {"laplace-check", cli::run_laplace_check},
      {"simulate-sde", cli::run_simulate_sde},
      {"estimate-gradient", cli::run_estimate_gradient},
      {"fd-oracle", cli::run_fd_oracle},
      {"gradient-scaling", cli::run_gradient_scaling},
      {"tail-check", cli::run_tail_check},
      {"spde-convolution", cli::run_spde_convolution},
      {"spde-solve", cli::run_spde_solve},
      {"spde-gap", cli::run_spde_gap},
      {"galerkin-cauchy", cli::run_galerkin_cauchy},
      {"timechange-demo", cli::run_timechange_demo},
  };
  const auto it = handlers.find(opts.subcommand);
  if (it == handlers.end()) {
    err << "error: unknown subcommand '" << opts.subcommand << "'\n";
    return 2;
  }
  try {
    const auto cfg = opts.config_path.empty() ? RunConfig{} : RunConfig::load(opts.config_path);
    const std::uint64_t seed = opts.seed ? *opts.seed : cfg.get_uint("seed", 0);
    std::filesystem::create_directories(opts.out_dir);
    RunConfig effective = cfg;
    effective.set("seed", std::to_string(seed));
    const cli::RunContext ctx{cfg, seed, std::max(1U, opts.workers), opts.out_dir, effective.hash_hex()};
    it->second(ctx);
    return 0;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericDivergence& e) {
    err << "numeric divergence: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace stablebel
