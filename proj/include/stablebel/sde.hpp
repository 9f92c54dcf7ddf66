#pragma once

// Euler solvers for dX = b(t,X) dt + sigma dW_{S_t}, the derivative flow
// d(D_h X) = grad b(t,X) D_h X dt, and the time-changed equation driven by a
// plain Brownian motion on the l^eps time scale.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "stablebel/error.hpp"
#include "stablebel/random.hpp"
#include "stablebel/stable.hpp"
#include "stablebel/timechange.hpp"

namespace stablebel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Drift b(t, x) with Jacobian and a certified bound on sup |grad b| (operator norm).
struct DriftModel {
  using Eval = std::function<void(double, const Vector&, Vector&)>;
  using Jacobian = std::function<void(double, const Vector&, Matrix&)>;

  std::string name;
  Eigen::Index dim = 0;
  Eval eval;
  Jacobian eval_jacobian;
  double grad_bound = 0.0;

  Vector operator()(double t, const Vector& x) const {
    Vector out(dim);
    eval(t, x, out);
    return out;
  }
  Matrix jacobian(double t, const Vector& x) const {
    Matrix out(dim, dim);
    eval_jacobian(t, x, out);
    return out;
  }
};

namespace drifts {

inline DriftModel zero(Eigen::Index d) {
  require(d >= 1, "dimension", "dimension must be at least 1");
  return {"zero", d, [](double, const Vector&, Vector& out) { out.setZero(); },
          [](double, const Vector&, Matrix& out) { out.setZero(); }, 0.0};
}

/// b(x) = A x; the bound is the largest singular value of A.
inline DriftModel linear(const Matrix& a) {
  require(a.rows() == a.cols() && a.rows() >= 1, "drift.matrix", "linear drift needs a square matrix");
  const double bound = Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
  return {"linear", a.rows(), [a](double, const Vector& x, Vector& out) { out.noalias() = a * x; },
          [a](double, const Vector&, Matrix& out) { out = a; }, bound};
}

/// Ornstein-Uhlenbeck drift b(x) = -kappa x.
inline DriftModel ou(double kappa, Eigen::Index d) {
  require(d >= 1, "dimension", "dimension must be at least 1");
  return {"ou", d, [kappa](double, const Vector& x, Vector& out) { out = -kappa * x; },
          [kappa, d](double, const Vector&, Matrix& out) { out = -kappa * Matrix::Identity(d, d); },
          std::abs(kappa)};
}

/// Rotation by omega in consecutive coordinate pairs; a trailing odd coordinate is left alone.
inline DriftModel rotating(double omega, Eigen::Index d) {
  require(d >= 2, "dimension", "rotating drift needs dimension >= 2");
  Matrix a = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i + 1 < d; i += 2) {
    a(i, i + 1) = omega;
    a(i + 1, i) = -omega;
  }
  DriftModel model = linear(a);
  model.name = "rotating";
  return model;
}

/// b_i(x) = -theta atan(x_i) + coupling atan(x_{i+1 mod d}); bounded, with
/// |grad b| <= |theta| + |coupling|.
inline DriftModel arctan_bounded(double theta, double coupling, Eigen::Index d) {
  require(d >= 1, "dimension", "dimension must be at least 1");
  auto eval = [theta, coupling, d](double, const Vector& x, Vector& out) {
    for (Eigen::Index i = 0; i < d; ++i)
      out(i) = -theta * std::atan(x(i)) + coupling * std::atan(x((i + 1) % d));
  };
  auto jac = [theta, coupling, d](double, const Vector& x, Matrix& out) {
    out.setZero();
    for (Eigen::Index i = 0; i < d; ++i) {
      out(i, i) += -theta / (1.0 + x(i) * x(i));
      const Eigen::Index j = (i + 1) % d;
      out(i, j) += coupling / (1.0 + x(j) * x(j));
    }
  };
  return {"arctan-bounded", d, eval, jac, std::abs(theta) + std::abs(coupling)};
}

}  // namespace drifts

struct DriftCheck {
  double max_fd_error = 0.0;   // max |(b(x+dh)-b(x))/d - grad b h| / |h|
  double max_jacobian_norm = 0.0;
};

/// Probes the finite-difference consistency of the Jacobian and the grad bound.
inline DriftCheck check_drift(const DriftModel& drift, RandomStream& stream, int probes = 64,
                              double delta = 1e-6) {
  DriftCheck check;
  const Eigen::Index d = drift.dim;
  Vector x(d), h(d), bx(d), bxh(d);
  Matrix jac(d, d);
  for (int p = 0; p < probes; ++p) {
    const double t = stream.uniform();
    for (Eigen::Index i = 0; i < d; ++i) {
      x(i) = 3.0 * stream.normal();
      h(i) = stream.normal();
    }
    drift.eval(t, x, bx);
    drift.eval(t, x + delta * h, bxh);
    drift.eval_jacobian(t, x, jac);
    const double err = ((bxh - bx) / delta - jac * h).norm() / h.norm();
    check.max_fd_error = std::max(check.max_fd_error, err);
    const double norm = d == 1 ? std::abs(jac(0, 0)) : Eigen::JacobiSVD<Matrix>(jac).singularValues()(0);
    check.max_jacobian_norm = std::max(check.max_jacobian_norm, norm);
  }
  return check;
}

/// Constant invertible diffusion matrix with cached inverse and |sigma^{-1}|.
class DiffusionMatrix {
 public:
  explicit DiffusionMatrix(const Matrix& sigma) : sigma_(sigma) {
    require(sigma.rows() == sigma.cols() && sigma.rows() >= 1, "sigma", "sigma must be square");
    Eigen::FullPivLU<Matrix> lu(sigma);
    require(lu.isInvertible(), "sigma", "sigma must be invertible");
    sigma_inv_ = lu.inverse();
    inv_norm_ = Eigen::JacobiSVD<Matrix>(sigma_inv_).singularValues()(0);
  }

  static DiffusionMatrix identity(Eigen::Index d) { return DiffusionMatrix(Matrix::Identity(d, d)); }
  static DiffusionMatrix diagonal(const Vector& diag) { return DiffusionMatrix(Matrix(diag.asDiagonal())); }

  const Matrix& sigma() const noexcept { return sigma_; }
  const Matrix& sigma_inv() const noexcept { return sigma_inv_; }
  double inv_norm() const noexcept { return inv_norm_; }
  Eigen::Index dim() const noexcept { return sigma_.rows(); }

 private:
  Matrix sigma_;
  Matrix sigma_inv_;
  double inv_norm_ = 0.0;
};

/// Solution path X and derivative flow D_h X on a common grid (column i <-> grid[i]).
struct FlowState {
  std::vector<double> grid;
  Matrix X;
  Matrix DX;
  Vector h;
};

inline constexpr double kOverflowGuard = 1e150;

namespace detail {

inline void check_state(const Vector& x, double t) {
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (!std::isfinite(x(k)) || std::abs(x(k)) > kOverflowGuard)
      throw NumericDivergence(t, "SDE state diverged");
}

}  // namespace detail

/// Workspace-reusing Euler step loop; `flow.grid` must be set.
/// X_{i+1} = X_i + b(t_i, X_i) dt + sigma (W_{i+1} - W_i).
inline void solve_sde_euler_into(const DriftModel& drift, const DiffusionMatrix& diff, const Vector& x0,
                                 const Eigen::Ref<const Matrix>& w_at_s, FlowState& flow, Vector& drift_buf) {
  const auto m = static_cast<Eigen::Index>(flow.grid.size());
  flow.X.resize(drift.dim, m);
  flow.X.col(0) = x0;
  drift_buf.resize(drift.dim);
  Vector x = x0;
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const double t = flow.grid[static_cast<std::size_t>(i)];
    const double dt = flow.grid[static_cast<std::size_t>(i + 1)] - t;
    drift.eval(t, x, drift_buf);
    for (Eigen::Index k = 0; k < drift.dim; ++k)
      if (!std::isfinite(drift_buf(k))) throw NumericDivergence(t, "drift evaluation returned a non-finite value");
    x += dt * drift_buf;
    x.noalias() += diff.sigma() * (w_at_s.col(i + 1) - w_at_s.col(i));
    detail::check_state(x, flow.grid[static_cast<std::size_t>(i + 1)]);
    flow.X.col(i + 1) = x;
  }
}

inline FlowState solve_sde_euler(const DriftModel& drift, const DiffusionMatrix& diff, const Vector& x0,
                                 std::span<const double> grid, const Eigen::Ref<const Matrix>& w_at_s) {
  validate_time_grid(grid);
  require(x0.size() == drift.dim, "x0", "initial point has the wrong dimension");
  require(diff.dim() == drift.dim, "sigma", "sigma and drift differ in dimension");
  require(w_at_s.rows() == drift.dim && w_at_s.cols() == static_cast<Eigen::Index>(grid.size()), "W",
          "noise sample does not match the grid");
  FlowState flow;
  flow.grid.assign(grid.begin(), grid.end());
  Vector buf;
  solve_sde_euler_into(drift, diff, x0, w_at_s, flow, buf);
  return flow;
}

/// DX_{i+1} = DX_i + grad b(t_i, X_i) DX_i dt, DX_0 = h. Writes into `dx`.
inline void solve_variational_into(const DriftModel& drift, const FlowState& flow, const Vector& h, Matrix& dx,
                                   Matrix& jac_buf) {
  const auto m = flow.X.cols();
  dx.resize(drift.dim, m);
  dx.col(0) = h;
  jac_buf.resize(drift.dim, drift.dim);
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const double t = flow.grid[static_cast<std::size_t>(i)];
    const double dt = flow.grid[static_cast<std::size_t>(i + 1)] - t;
    drift.eval_jacobian(t, flow.X.col(i), jac_buf);
    dx.col(i + 1) = dx.col(i) + dt * (jac_buf * dx.col(i));
  }
}

inline FlowState solve_variational(const DriftModel& drift, FlowState flow, const Vector& h) {
  require(h.size() == drift.dim, "h", "direction has the wrong dimension");
  require(flow.X.cols() == static_cast<Eigen::Index>(flow.grid.size()) && flow.X.rows() == drift.dim, "grid",
          "solution path does not match its grid");
  Matrix jac;
  solve_variational_into(drift, flow, h, flow.DX, jac);
  flow.h = h;
  return flow;
}

/// Euler scheme for the time-changed equation
///   Y_s = x + int_{l^eps_0}^s b(gamma_r, Y_r) gamma'_r dr + sigma W_s,
/// on `s_grid` within [l^eps_0, l^eps_T]. `w` holds W at s_grid (column j).
inline Matrix solve_time_changed(const DriftModel& drift, const DiffusionMatrix& diff, const Vector& x0,
                                 const InversePath& gamma, std::span<const double> s_grid,
                                 const Eigen::Ref<const Matrix>& w) {
  require(!s_grid.empty(), "s_grid", "empty grid");
  require(x0.size() == drift.dim, "x0", "initial point has the wrong dimension");
  require(w.rows() == drift.dim && w.cols() == static_cast<Eigen::Index>(s_grid.size()), "W",
          "noise sample does not match the grid");
  for (std::size_t j = 0; j < s_grid.size(); ++j) {
    require(s_grid[j] >= gamma.lower() && s_grid[j] <= gamma.upper(), "s_grid", "grid leaves the domain of gamma");
    if (j > 0) require(s_grid[j] > s_grid[j - 1], "s_grid", "grid must be strictly increasing");
  }
  const auto m = static_cast<Eigen::Index>(s_grid.size());
  Matrix y(drift.dim, m);
  y.col(0) = x0;
  Vector x = x0;
  Vector b(drift.dim);
  for (Eigen::Index j = 0; j + 1 < m; ++j) {
    const double s = s_grid[static_cast<std::size_t>(j)];
    const double ds = s_grid[static_cast<std::size_t>(j + 1)] - s;
    const double g = gamma.value(s);
    drift.eval(g, x, b);
    x += (ds * gamma.derivative(s)) * b;
    x.noalias() += diff.sigma() * (w.col(j + 1) - w.col(j));
    detail::check_state(x, s + ds);
    y.col(j + 1) = x;
  }
  return y;
}

/// CSV columns: t, X_1..X_d, DX_1..DX_d.
inline void write_flow_csv(std::ostream& out, const FlowState& flow) {
  const auto d = flow.X.rows();
  out << 't';
  for (Eigen::Index k = 0; k < d; ++k) out << ",X_" << k + 1;
  for (Eigen::Index k = 0; k < d; ++k) out << ",DX_" << k + 1;
  out << '\n';
  out.precision(17);
  const bool has_dx = flow.DX.cols() == flow.X.cols();
  for (Eigen::Index i = 0; i < flow.X.cols(); ++i) {
    out << flow.grid[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < d; ++k) out << ',' << flow.X(k, i);
    for (Eigen::Index k = 0; k < d; ++k) out << ',' << (has_dx ? flow.DX(k, i) : 0.0);
    out << '\n';
  }
}

}  // namespace stablebel
