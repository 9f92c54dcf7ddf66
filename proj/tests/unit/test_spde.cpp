#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stablebel/spde_heat.hpp"

using namespace stablebel;

namespace {

SpdeRunConfig run_config(std::size_t grid, std::size_t samples, std::uint64_t seed,
                         Driver driver = Driver::Subordinated) {
  SpdeRunConfig run;
  run.grid_size = grid;
  run.n_samples = samples;
  run.noise.seed = seed;
  run.noise.driver = driver;
  return run;
}

}  // namespace

TEST(HeatSpectrum, EigenvaluesAndEigenfunctions) {
  const auto pairs = heat_eigenpairs(3);
  EXPECT_NEAR(pairs.lambdas[0], 9.8696, 1e-4);
  EXPECT_DOUBLE_EQ(pairs.lambdas[2], 9.0 * std::numbers::pi * std::numbers::pi);
  EXPECT_NEAR(pairs.eigenfunction(1, 0.5), 1.41421356, 1e-8);
  EXPECT_THROW(heat_eigenpairs(0), InvalidArgument);
}

TEST(HeatSpectrum, Orthonormality) {
  const int panels = 2000;  // Simpson, well above 10 points per wavelength for k <= 12
  for (std::size_t k = 1; k <= 12; ++k) {
    for (std::size_t j = 1; j <= 12; ++j) {
      auto f = [&](double z) { return heat_eigenfunction(k, z) * heat_eigenfunction(j, z); };
      const double h = 1.0 / panels;
      double s = f(0.0) + f(1.0);
      for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
      EXPECT_NEAR(s * h / 3.0, k == j ? 1.0 : 0.0, 1e-8) << k << "," << j;
    }
  }
}

TEST(HeatSpectrum, RenderingOfUnitCoefficient) {
  Vector c = Vector::Zero(4);
  c(2) = 1.0;
  const std::vector<double> zeta = {0.0, 0.1, 0.37, 1.0};
  const auto u = render_on_grid(c, zeta);
  for (std::size_t i = 0; i < zeta.size(); ++i) EXPECT_NEAR(u[i], heat_eigenfunction(3, zeta[i]), 1e-15);
}

TEST(SpectralModel, Validation) {
  const StableParams p(1.5);
  EXPECT_THROW(SpectralModel({1.0, 0.5}, {1.0, 1.0}, p), InvalidArgument);
  EXPECT_THROW(SpectralModel({1.0, 2.0}, {1.0}, p), InvalidArgument);
  EXPECT_THROW(SpectralModel({1.0}, {-1.0}, p), InvalidArgument);
  const SpectralModel m({1.0, 4.0}, {0.5, 2.0}, p);
  EXPECT_DOUBLE_EQ(m.delta(), 0.5);
  EXPECT_DOUBLE_EQ(m.series_sum(), 0.25 + 1.0);
  EXPECT_DOUBLE_EQ(m.series_sum(1), 0.25);
  EXPECT_EQ(m.truncated(1).n(), 1U);
}

TEST(Nonlinearity, LipschitzCheck) {
  RandomStream stream(1, 1);
  for (const auto& f : {nonlinearities::zero(), nonlinearities::constant(Vector::Ones(5)),
                        nonlinearities::arctan(0.5), nonlinearities::arctan(-2.0, 3)}) {
    EXPECT_LE(lipschitz_ratio(f, 8, stream), 1.0 + 1e-6) << f.name;
  }
}

TEST(Noise, ModesAreSharedAcrossTruncations) {
  const SpdeNoise noise{7, Driver::Subordinated};
  SubordinatorPath clock;
  clock.grid = uniform_grid(1.0, 32);
  sample_spde_clock(StableParams(1.2), noise, 3, clock);
  Matrix small;
  Matrix large;
  sample_mode_increments(noise, 3, 4, clock.values, small);
  sample_mode_increments(noise, 3, 9, clock.values, large);
  EXPECT_EQ(small, large.topRows(4));
}

TEST(Convolution, ZeroIntensityGivesZero) {
  const SpectralModel model(heat_eigenpairs(5).lambdas, std::vector<double>(5, 0.0), StableParams(1.5));
  RandomStream stream(2, 2);
  const auto path = sample_subordinator_path(model.params(), uniform_grid(1.0, 20), stream);
  EXPECT_TRUE(sample_stochastic_convolution(model, 1.0, path, SpdeNoise{1}, 0).isZero(0.0));
}

TEST(Convolution, GridMustCoverHorizon) {
  const auto model = SpectralModel::heat(3, 1.0, StableParams(1.5));
  RandomStream stream(2, 2);
  const auto path = sample_subordinator_path(model.params(), uniform_grid(1.0, 20), stream);
  EXPECT_THROW(sample_stochastic_convolution(model, 2.0, path, SpdeNoise{1}, 0), InvalidArgument);
  EXPECT_THROW(sample_stochastic_convolution(model, 0.51, path, SpdeNoise{1}, 0), InvalidArgument);
  EXPECT_NO_THROW(sample_stochastic_convolution(model, 0.5, path, SpdeNoise{1}, 0));
}

TEST(Convolution, BrownianVarianceMatchesLeftPointSum) {
  const auto model = SpectralModel::heat(1, 1.0, StableParams(1.5));
  const std::size_t steps = 1024;
  const auto sample = sample_convolution_coordinate(model, 0, 1.0, run_config(steps, 20000, 3, Driver::Brownian));
  RunningMoments sq;
  for (double v : sample.values) sq.add(v * v);
  const double lambda = model.lambdas()[0];
  const double dt = 1.0 / steps;
  double discrete = 0.0;
  for (std::size_t i = 0; i < steps; ++i) discrete += std::exp(-2.0 * lambda * (1.0 - i * dt)) * dt;
  EXPECT_NEAR(sq.mean, discrete, 3.0 * sq.std_err());
  EXPECT_NEAR(sample.conditional_std[0] * sample.conditional_std[0], discrete, 1e-12);
  EXPECT_NEAR(brownian_convolution_variance(lambda, 1.0, 1.0), 0.050660, 1e-6);
  EXPECT_NEAR(discrete, brownian_convolution_variance(lambda, 1.0, 1.0), 1.2 * lambda * dt * discrete);
}

TEST(Convolution, VarianceMatchedGainIsExactOnStiffGrid) {
  // lambda_3 dt = 9 pi^2 / 16 > 5: the left-point sum keeps almost none of the variance.
  const auto left = SpectralModel::heat(3, 1.0, StableParams(1.5));
  const auto matched = left.with_noise_quadrature(NoiseQuadrature::VarianceMatched);
  const auto run = run_config(16, 20000, 5, Driver::Brownian);
  const double exact = brownian_convolution_variance(left.lambdas()[2], 1.0, 1.0);
  const auto sample = sample_convolution_coordinate(matched, 2, 1.0, run);
  RunningMoments sq;
  for (double v : sample.values) sq.add(v * v);
  EXPECT_NEAR(sq.mean, exact, 3.0 * sq.std_err());
  EXPECT_NEAR(sample.conditional_std[0] * sample.conditional_std[0], exact, 1e-12 * exact);
  const auto starved = sample_convolution_coordinate(left, 2, 1.0, run);
  EXPECT_LT(starved.conditional_std[0] * starved.conditional_std[0], 1e-3 * exact);
  EXPECT_EQ(matched.truncated(2).noise_quadrature(), NoiseQuadrature::VarianceMatched);
  EXPECT_EQ(matched.with_betas_scaled(2.0).noise_quadrature(), NoiseQuadrature::VarianceMatched);
}

class ConditionalGaussian : public ::testing::TestWithParam<NoiseQuadrature> {};

INSTANTIATE_TEST_SUITE_P(Quadratures, ConditionalGaussian,
                         ::testing::Values(NoiseQuadrature::LeftEndpoint, NoiseQuadrature::VarianceMatched));

TEST_P(ConditionalGaussian, StandardizedByTheClock) {
  const auto model = SpectralModel::heat(3, 1.0, StableParams(1.2)).with_noise_quadrature(GetParam());
  const auto sample = sample_convolution_coordinate(model, 1, 0.5, run_config(64, 10000, 4));
  std::vector<double> z;
  for (std::size_t i = 0; i < sample.values.size(); ++i) z.push_back(sample.values[i] / sample.conditional_std[i]);
  EXPECT_LT(anderson_darling_standard_normal(z), kAndersonDarlingCritical1Percent);

  // Bin by conditional std; the standardized variance is 1 in every bin.
  std::vector<double> sorted = sample.conditional_std;
  std::sort(sorted.begin(), sorted.end());
  const double edges[] = {0.0, quantile_sorted(sorted, 0.25), quantile_sorted(sorted, 0.5),
                          quantile_sorted(sorted, 0.75), std::numeric_limits<double>::infinity()};
  for (int b = 0; b < 4; ++b) {
    RunningMoments bin;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (sample.conditional_std[i] >= edges[b] && sample.conditional_std[i] < edges[b + 1]) bin.add(z[i] * z[i]);
    EXPECT_NEAR(bin.mean, 1.0, 3.0 * bin.std_err()) << "bin " << b;
  }
}

TEST(Convolution, MomentCheckRejectsLargeP) {
  const auto model = SpectralModel::heat(5, 1.0, StableParams(1.5));
  const double ts[] = {0.1, 1.0};
  EXPECT_THROW(convolution_moment_check(model, 1.5, ts, run_config(16, 100, 1)), InvalidArgument);
  EXPECT_THROW(convolution_moment_check(model, 2.0, ts, run_config(16, 100, 1)), InvalidArgument);
}

TEST(Convolution, MomentCheckReportsBoundAndGrowth) {
  const auto model = SpectralModel::heat(10, 1.0, StableParams(1.5));
  const double ts[] = {0.01, 0.05, 0.2};
  const auto report = convolution_moment_check(model, 1.0, ts, run_config(64, 4000, 5));
  EXPECT_TRUE(report.monotone);
  EXPECT_TRUE(report.bound_holds);
  EXPECT_NEAR(report.points[0].fitted_bound, report.points[0].moment, 1e-12);
}

TEST(GaussianFormula, ClosedForm) {
  EXPECT_EQ(gaussian_pth_moment(2.0), 1.0);
  EXPECT_NEAR(gaussian_pth_moment(1.0), std::sqrt(2.0 / std::numbers::pi), 1e-15);
  EXPECT_NEAR(gaussian_pth_moment(4.0), 3.0, 1e-14);
  EXPECT_THROW(gaussian_pth_moment(0.0), InvalidArgument);
}

TEST(GaussianFormula, MonteCarlo) {
  const double c[] = {3.0, 4.0};
  const auto check = gaussian_moment_mc(c, 1.0, 100000, 8);
  EXPECT_NEAR(check.exact, 3.98942, 1e-5);
  EXPECT_NEAR(check.empirical, check.exact, 3.0 * check.std_err);
}

TEST(MildSolver, PureSemigroup) {
  const auto model = SpectralModel::heat(4, 1.0, StableParams(1.5));
  const auto grid = uniform_grid(0.3, 100);
  const Vector x = Vector::LinSpaced(4, 1.0, -2.0);
  const auto st = solve_mild_galerkin(model, nonlinearities::zero(), x, grid, Matrix::Zero(4, 100));
  for (Eigen::Index k = 0; k < 4; ++k)
    EXPECT_NEAR(st.coeffs(k, 100), std::exp(-model.lambdas()[static_cast<std::size_t>(k)] * 0.3) * x(k),
                1e-13 * std::abs(x(k)) + 1e-300);
}

TEST(MildSolver, ConstantForcing) {
  const SpectralModel model({std::numbers::pi * std::numbers::pi}, {1.0}, StableParams(1.5));
  const auto grid = uniform_grid(1.0, 10000);
  const Vector x = Vector::Constant(1, 0.7);
  const Vector c = Vector::Constant(1, 3.0);
  const auto st = solve_mild_galerkin(model, nonlinearities::constant(c), x, grid, Matrix::Zero(1, 10000));
  const double lambda = model.lambdas()[0];
  const double exact = (1.0 - std::exp(-lambda)) * 3.0 / lambda + std::exp(-lambda) * 0.7;
  EXPECT_NEAR(st.coeffs(0, 10000), exact, 1e-6);
}

class MildSolverQuadrature : public ::testing::TestWithParam<NoiseQuadrature> {};

INSTANTIATE_TEST_SUITE_P(Quadratures, MildSolverQuadrature,
                         ::testing::Values(NoiseQuadrature::LeftEndpoint, NoiseQuadrature::VarianceMatched));

TEST_P(MildSolverQuadrature, ReducesToConvolutionWithoutNonlinearity) {
  const auto model = SpectralModel::heat(6, 0.8, StableParams(1.3)).with_noise_quadrature(GetParam());
  SubordinatorPath clock;
  clock.grid = uniform_grid(0.7, 50);
  const SpdeNoise noise{9};
  sample_spde_clock(model.params(), noise, 2, clock);
  Matrix dw;
  sample_mode_increments(noise, 2, 6, clock.values, dw);
  const Vector conv = stochastic_convolution(model, clock.grid, dw);
  const auto from_zero = solve_mild_galerkin(model, nonlinearities::zero(), Vector::Zero(6), clock.grid, dw);
  for (Eigen::Index k = 0; k < 6; ++k) EXPECT_EQ(from_zero.coeffs(k, 50), conv(k));
  EXPECT_TRUE(sample_stochastic_convolution(model, 0.7, clock, noise, 2) == conv);

  const Vector x = Vector::LinSpaced(6, 1.0, 2.0);
  const auto from_x = solve_mild_galerkin(model, nonlinearities::zero(), x, clock.grid, dw);
  for (Eigen::Index k = 0; k < 6; ++k) {
    const double semigroup = std::exp(-model.lambdas()[static_cast<std::size_t>(k)] * 0.7) * x(k);
    EXPECT_NEAR(from_x.coeffs(k, 50) - semigroup, conv(k), 1e-12);
  }
}

TEST(MildSolver, DetectsDivergence) {
  NonlinearityF explode{"explode", [](const Vector& x, Vector& out) { out = 1e300 * (x.array() + 1.0).matrix(); },
                        1e300, std::nullopt, 0};
  const auto model = SpectralModel::heat(2, 1.0, StableParams(1.5));
  const auto grid = uniform_grid(1.0, 10);
  EXPECT_THROW(solve_mild_galerkin(model, explode, Vector::Ones(2), grid, Matrix::Zero(2, 10)), NumericDivergence);
}

TEST(StrongFeller, DegenerateCasesAreExactlyZero) {
  const auto model = SpectralModel::heat(6, 1.0, StableParams(1.5));
  const auto nl = nonlinearities::arctan(0.5);
  const Vector x = Vector::Zero(6);
  const Vector y = Vector::Constant(6, 0.1);
  const auto run = run_config(32, 500, 3);
  const auto f = test_functions::arctan(Vector::Unit(6, 0));
  const auto same = strong_feller_gap(model, nl, f, x, x, 0.5, run);
  EXPECT_EQ(same.gap, 0.0);
  EXPECT_EQ(same.std_err, 0.0);
  const auto flat = strong_feller_gap(model, nl, test_functions::constant(3.0), x, y, 0.5, run);
  EXPECT_EQ(flat.gap, 0.0);
  EXPECT_THROW(strong_feller_gap(model, nl, test_functions::linear(Vector::Ones(6)), x, y, 0.5, run),
               InvalidArgument);
}

TEST(StrongFeller, EffectiveConstantStableInTheDistance) {
  const auto model = SpectralModel::heat(10, 1.0, StableParams(1.5));
  const auto nl = nonlinearities::arctan(0.5);
  const auto f = test_functions::arctan(Vector::Unit(10, 0));
  const Vector x = Vector::Zero(10);
  const auto run = run_config(32, 2000, 6);
  std::vector<double> constants;
  for (double d : {1e-1, 1e-2, 1e-3}) {
    const Vector y = x + d * Vector::Unit(10, 0);
    constants.push_back(strong_feller_gap(model, nl, f, x, y, 0.3, run).effective_constant);
  }
  const auto [lo, hi] = std::minmax_element(constants.begin(), constants.end());
  EXPECT_GT(*lo, 0.0);
  EXPECT_LT(*hi / *lo, 2.0);
}

TEST(Galerkin, NoNewNoiseMeansNoDeviation) {
  std::vector<double> betas(16, 0.0);
  for (int k = 0; k < 4; ++k) betas[static_cast<std::size_t>(k)] = 1.0;
  const SpectralModel model(heat_eigenpairs(16).lambdas, betas, StableParams(1.5));
  const auto report = galerkin_convergence_check(model, {4, 8, 16}, nonlinearities::arctan(0.5, 4),
                                                 Vector::Zero(16), 0.5, run_config(32, 200, 2));
  for (const auto& dev : report.deviations)
    for (double v : dev) EXPECT_EQ(v, 0.0);
}

TEST(Galerkin, DeviationsShrinkWithTruncationLevel) {
  const auto model = SpectralModel::heat(32, 1.0, StableParams(1.5));
  const auto report = galerkin_convergence_check(model, {4, 8, 16, 32}, nonlinearities::arctan(0.5),
                                                 Vector::Constant(32, 0.1), 0.5, run_config(64, 400, 3));
  EXPECT_TRUE(report.monotone);
  EXPECT_GT(report.envelope_constant, 0.0);

  // 16 steps make every mode above 4 stiff, and left-point gains starve them.
  const auto coarse = run_config(16, 400, 3);
  const auto matched = galerkin_convergence_check(model.with_noise_quadrature(NoiseQuadrature::VarianceMatched),
                                                  {8, 16, 32}, nonlinearities::arctan(0.5), Vector::Constant(32, 0.1),
                                                  0.5, coarse);
  const auto left = galerkin_convergence_check(model, {8, 16, 32}, nonlinearities::arctan(0.5),
                                               Vector::Constant(32, 0.1), 0.5, coarse);
  EXPECT_TRUE(matched.monotone);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_GT(matched.medians[j], 100.0 * left.medians[j]) << j;
  }
  EXPECT_THROW(galerkin_convergence_check(model, {8}, nonlinearities::zero(), Vector::Zero(32), 0.5,
                                          run_config(8, 10, 1)),
               InvalidArgument);
}
