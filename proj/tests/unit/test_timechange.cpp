#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "stablebel/stable.hpp"
#include "stablebel/stats.hpp"
#include "stablebel/timechange.hpp"

using namespace stablebel;

namespace {

CadlagIncreasingPath identity_path(double end) {
  return CadlagIncreasingPath({0.0, end}, {0.0, end}, KnotRule::PiecewiseLinear);
}

CadlagIncreasingPath unit_step_path() {
  return CadlagIncreasingPath({0.0, 1.0}, {0.0, 2.0}, KnotRule::PiecewiseConstant, 3.0);
}

CadlagIncreasingPath random_step_path(std::uint64_t id, std::size_t knots = 64, double horizon = 1.0) {
  RandomStream stream(123, id);
  const auto grid = uniform_grid(horizon, knots);
  return CadlagIncreasingPath::from_subordinator(sample_subordinator_path(StableParams(1.2), grid, stream));
}

}  // namespace

TEST(CadlagPath, PiecewiseConstantIsRightContinuous) {
  const auto path = unit_step_path();
  EXPECT_EQ(path.value(0.999999), 0.0);
  EXPECT_EQ(path.value(1.0), 2.0);
  EXPECT_EQ(path.value(2.5), 2.0);
  EXPECT_THROW(path.value(3.5), InvalidArgument);
  EXPECT_THROW(path.value(-0.1), InvalidArgument);
}

TEST(CadlagPath, RejectsDecreasingValues) {
  EXPECT_THROW(CadlagIncreasingPath({0.0, 1.0}, {1.0, 0.5}, KnotRule::PiecewiseConstant), InvalidArgument);
  EXPECT_THROW(CadlagIncreasingPath({0.0, 1.0, 1.0}, {0.0, 1.0, 2.0}, KnotRule::PiecewiseConstant), InvalidArgument);
}

TEST(CadlagPath, ExactIntegrals) {
  EXPECT_NEAR(identity_path(2.0).integral(0.5, 1.5), 1.0, 1e-15);
  EXPECT_NEAR(unit_step_path().integral(0.75, 1.25), 0.5, 1e-15);
  const auto extended = identity_path(1.0).extended_to(2.0);
  EXPECT_NEAR(extended.integral(0.5, 2.0), 0.375 + 1.0, 1e-15);
  EXPECT_EQ(extended.value(1.7), 1.0);
}

TEST(Smoothing, AnalyticExamples) {
  EXPECT_NEAR(smooth(identity_path(2.0), 0.1).value(1.0), 1.15, 1e-12);
  EXPECT_NEAR(smooth(unit_step_path(), 0.5).value(0.75), 1.375, 1e-12);
}

TEST(Smoothing, ValidatesInputs) {
  EXPECT_THROW(smooth(identity_path(2.0), 0.0), InvalidArgument);
  EXPECT_THROW(smooth(identity_path(2.0), 1.0), InvalidArgument);
  EXPECT_THROW(smooth(identity_path(0.05), 0.1), InvalidArgument);
  const auto s = smooth(identity_path(1.0), 0.1);
  EXPECT_THROW(s.value(0.95), InvalidArgument);  // window [0.95, 1.05] leaves the domain
}

TEST(Smoothing, DominatesAndStrictlyIncreases) {
  for (std::uint64_t id = 0; id < 5; ++id) {
    const auto base = random_step_path(id).extended_to(1.2);
    for (double eps : {0.2, 0.05, 0.01}) {
      const auto s = smooth(base, eps);
      double prev_t = 0.0;
      double prev_v = s.value(0.0);
      for (int i = 1; i <= 400; ++i) {
        const double t = static_cast<double>(i) / 400.0;
        const double v = s.value(t);
        EXPECT_GE(v, base.value(t));
        EXPECT_GE(v - prev_v, eps * (t - prev_t) - 1e-13 * std::max(1.0, v));
        prev_t = t;
        prev_v = v;
      }
    }
  }
}

TEST(Smoothing, DecreasesToThePathAtContinuityPoints) {
  const auto base = random_step_path(7).extended_to(1.5);
  const double eps_seq[] = {0.2, 0.1, 0.05, 0.025, 0.0125, 1e-3, 1e-4};
  // Points strictly inside a knot interval, at distance > 0.2 from the next knot is impossible on a
  // 1/64 grid, so check monotonicity only once eps is below the distance to the next knot.
  for (int i = 0; i < 64; ++i) {
    const double t = (i + 0.5) / 64.0;
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : eps_seq) {
      const double v = smooth(base, eps).value(t);
      if (eps < 0.5 / 64.0) {
        EXPECT_LE(v, prev);
        // Away from knots the gap is exactly eps * t.
        EXPECT_NEAR(v - base.value(t), eps * t, 1e-9);
        prev = v;
      }
    }
  }
}

TEST(Smoothing, GapBelowMillionthOnlyNearTheOrigin) {
  const auto base = random_step_path(3).extended_to(1.1);
  const auto s = smooth(base, 1e-4);
  EXPECT_LT(s.value(0.005) - base.value(0.005), 1e-6);
  EXPECT_NEAR(s.value(0.5 + 0.5 / 64) - base.value(0.5 + 0.5 / 64), 1e-4 * (0.5 + 0.5 / 64), 1e-9);
}

TEST(Inverse, AffineExample) {
  const auto inv = invert(smooth(identity_path(2.0), 0.1));
  EXPECT_NEAR(inv.value(1.15), 1.0, 1e-12);
  EXPECT_NEAR(inv.value(0.6), (0.6 - 0.05) / 1.1, 1e-12);
  EXPECT_NEAR(inv.derivative(0.6), 1.0 / 1.1, 1e-12);
  EXPECT_THROW(inv.value(0.04), InvalidArgument);
}

TEST(Inverse, RoundTripOnRandomPaths) {
  for (std::uint64_t id = 0; id < 5; ++id) {
    const auto s = smooth(random_step_path(id).extended_to(1.01), 1e-2);
    const auto inv = invert(s);
    RandomStream stream(9, id);
    for (int k = 0; k < 100; ++k) {
      const double t = stream.uniform();
      // A level s is only resolved to half an ulp, so no inverse can beat
      // ulp(s) / slope; that floor exceeds 1e-10 once l reaches ~1e3.
      const double floor = std::nextafter(s.value(t), INFINITY) - s.value(t);
      EXPECT_NEAR(inv.value(s.value(t)), t, std::max(1e-10, 2.0 * floor / s.derivative(t)));
      const double level = inv.lower() + stream.uniform() * (inv.upper() - inv.lower());
      EXPECT_NEAR(s.value(inv.value(level)), level, 1e-10 * std::max(1.0, level));
    }
  }
}

TEST(Inverse, StepPathInverseIsContinuousAndIncreasing) {
  const auto s = smooth(unit_step_path(), 0.5);
  const auto inv = invert(s);
  double prev = inv.value(inv.lower());
  const int n = 2000;
  for (int i = 1; i <= n; ++i) {
    const double level = inv.lower() + (inv.upper() - inv.lower()) * i / n;
    const double g = inv.value(level);
    EXPECT_GT(g, prev);
    // Slope of l^eps is at least eps, so gamma is 1/eps-Lipschitz.
    EXPECT_LE(g - prev, (inv.upper() - inv.lower()) / n / 0.5 * (1 + 1e-9));
    prev = g;
  }
}

TEST(ItoSum, TrivialCases) {
  const std::vector<double> clock = {0.0, 0.5, 0.7, 2.0};
  Eigen::MatrixXd w(2, 4);
  w << 0.0, 0.3, -0.2, 1.1, 0.0, -0.4, 0.9, 0.5;
  EXPECT_EQ(ito_integral_time_changed(Eigen::MatrixXd::Zero(2, 4), clock, w), 0.0);
  Eigen::Vector2d h(2.0, -1.0);
  const Eigen::MatrixXd constant = h.replicate(1, 4);
  EXPECT_NEAR(ito_integral_time_changed(constant, clock, w), h.dot(w.col(3) - w.col(0)), 1e-15);
  EXPECT_THROW(ito_integral_time_changed(Eigen::MatrixXd::Zero(2, 2), clock, w), InvalidArgument);
  EXPECT_THROW(ito_integral_time_changed(Eigen::MatrixXd::Zero(2, 4), std::vector<double>{0.0, 1.0}, w),
               InvalidArgument);
}

TEST(ItoSum, MedianOfSquaredSubordinatedIncrement) {
  const StableParams params(1.0);
  const auto grid = uniform_grid(1.0, 4);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, 5);
  std::vector<double> sq;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    RandomStream stream(31, i);
    const auto path = sample_subordinator_path(params, grid, stream);
    const auto w = sample_brownian_at_subordinated_times(path, 1, stream);
    const double v = ito_integral_time_changed(ones, path.values, w);
    sq.push_back(v * v);
  }
  EXPECT_NEAR(median(sq), 0.5, 0.025);
}

TEST(ItoSum, DoobBoundOnFixedClock) {
  const auto base = random_step_path(11);
  const auto& clock = base.values();
  const auto m = clock.size();
  Eigen::MatrixXd xi(1, static_cast<Eigen::Index>(m));
  double bound = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    xi(0, static_cast<Eigen::Index>(i)) = std::cos(3.0 * base.knots()[i]);
    if (i + 1 < m) bound += xi(0, static_cast<Eigen::Index>(i)) * xi(0, static_cast<Eigen::Index>(i)) * (clock[i + 1] - clock[i]);
  }
  bound *= 4.0;
  RunningMoments sup_sq;
  for (std::uint64_t p = 0; p < 20000; ++p) {
    RandomStream stream(12, p);
    PathMatrix w;
    sample_brownian_on_clock(clock, 1, stream, w);
    double running = 0.0;
    double sup = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      running += xi(0, static_cast<Eigen::Index>(i)) * (w(0, static_cast<Eigen::Index>(i + 1)) - w(0, static_cast<Eigen::Index>(i)));
      sup = std::max(sup, running * running);
    }
    sup_sq.add(sup);
  }
  EXPECT_LE(sup_sq.mean, bound + 3.0 * sup_sq.std_err());
}

TEST(ItoSum, SmoothedClockIntegralsConverge) {
  // Integrate xi = cos on a 1000-point grid against W_{l^eps} and W_l on shared Brownian paths.
  const std::size_t n = 1000;
  const auto grid = uniform_grid(1.0, n);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.1, 0.01, 1e-3, 1e-4}) {
    RunningMoments msq;
    for (std::uint64_t id = 0; id < 40; ++id) {
      const auto base = random_step_path(id, 37).extended_to(1.0 + eps);
      const auto s = smooth(base, eps);
      std::vector<double> times;
      std::vector<double> plain(n + 1), smoothed(n + 1);
      for (std::size_t i = 0; i <= n; ++i) {
        plain[i] = base.value(grid[i]);
        smoothed[i] = s.value(grid[i]);
        times.push_back(plain[i]);
      }
      for (std::size_t i = 0; i <= n; ++i) times.push_back(smoothed[i]);
      for (std::uint64_t r = 0; r < 25; ++r) {
        RandomStream stream(77, id * 1000 + r);
        const auto w = sample_brownian_at_times(times, 1, stream);
        Eigen::MatrixXd xi(1, static_cast<Eigen::Index>(n + 1));
        for (std::size_t i = 0; i <= n; ++i) xi(0, static_cast<Eigen::Index>(i)) = std::cos(grid[i]);
        const double a = ito_integral_time_changed(xi, plain, w.leftCols(static_cast<Eigen::Index>(n + 1)));
        const double b = ito_integral_time_changed(xi, smoothed, w.rightCols(static_cast<Eigen::Index>(n + 1)));
        msq.add((a - b) * (a - b));
      }
    }
    EXPECT_LT(msq.mean, prev) << "eps=" << eps;
    prev = msq.mean;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Bracket, ContinuousClockGivesTerminalValue) {
  const auto grid = uniform_grid(2.0, 100);
  RandomStream stream(1, 0);
  PathMatrix w;
  sample_brownian_on_clock(grid, 1, stream, w);
  EXPECT_NEAR(discrete_bracket(grid, w), 2.0, 1e-12);
  sample_brownian_on_clock(grid, 3, stream, w);
  EXPECT_NEAR(discrete_bracket(grid, w), 6.0, 1e-12);  // trace of the matrix bracket
}

TEST(Bracket, SingleJump) {
  const std::vector<double> clock = {0.0, 0.0, 0.0, 5.0, 5.0};
  Eigen::MatrixXd w(1, 5);
  w << 0.0, 0.0, 0.0, 1.3, 1.3;
  EXPECT_NEAR(discrete_bracket(clock, w), 1.3 * 1.3, 1e-15);
}

TEST(Bracket, UnbiasedForTruncatedSubordinator) {
  const StableParams params(1.4);
  const auto grid = uniform_grid(1.0, 64);
  RunningMoments diff;
  for (std::uint64_t i = 0; i < 20000; ++i) {
    RandomStream stream(44, i);
    const auto path = sample_subordinator_path(params, grid, stream);
    if (path.terminal() >= 20.0) continue;
    const auto w = sample_brownian_at_subordinated_times(path, 2, stream);
    diff.add(discrete_bracket(path.values, w, 1e-3) - 2.0 * path.terminal());
  }
  EXPECT_NEAR(diff.mean, 0.0, 4.0 * diff.std_err());
}

TEST(PathCsv, RoundTrip) {
  const auto path = random_step_path(2, 10).extended_to(1.5);
  std::stringstream buf;
  write_path_csv(buf, path);
  const auto back = read_path_csv(buf);
  EXPECT_EQ(back.rule(), path.rule());
  EXPECT_EQ(back.domain_end(), path.domain_end());
  EXPECT_EQ(back.knots(), path.knots());
  EXPECT_EQ(back.values(), path.values());
}
