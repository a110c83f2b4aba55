#ifndef PMLE_ORACLES_HPP
#define PMLE_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "pmle/errors.hpp"
#include "pmle/model.hpp"
#include "pmle/rng.hpp"

// Closed-form and brute-force verification machinery for the toy hierarchical
// model, plus generic finite-difference and quadrature oracles. Everything in
// here is deterministic and independent of the sampler implementations it is
// used to check.

namespace pmle::oracles {

// ---------------------------------------------------------------------------
// Deterministic mean-field recursions of the toy model.
//
// The infinite-population limits reduce to scalar recursions in
// (theta_k, nu_k), nu being the mean of the latent average:
//   PGA:  theta' = theta + h L D_x (nu - theta),  nu' = nu + h (y_bar + theta - 2 nu)
//   PQN:  theta' = theta + h (nu - theta),        nu' = nu + h (y_bar + theta - 2 nu)
//   PMGA: nu' = nu + h (y_bar - nu), theta reported as nu
// L is an optional positive scalar scaling of the PGA theta update (L = 1/D_x
// makes PGA coincide with PQN).
// ---------------------------------------------------------------------------

enum class MeanFieldVariant { pga, pqn, pmga };

struct MeanFieldState {
  double theta = 0.0;
  double nu = 0.0;
};

inline std::vector<MeanFieldState> meanfield_recursion(MeanFieldVariant variant, Index d_x,
                                                       double h, double y_bar,
                                                       MeanFieldState init, long steps,
                                                       double lambda_scale = 1.0) {
  if (!(h > 0.0)) throw ContractViolation("meanfield_recursion: h must be positive");
  if (d_x < 1) throw ContractViolation("meanfield_recursion: d_x must be positive");
  std::vector<MeanFieldState> path;
  path.reserve(static_cast<std::size_t>(steps) + 1);
  MeanFieldState s = init;
  if (variant == MeanFieldVariant::pmga) s.theta = s.nu;
  path.push_back(s);
  for (long k = 0; k < steps; ++k) {
    MeanFieldState next;
    switch (variant) {
      case MeanFieldVariant::pga:
        next.theta = s.theta + h * lambda_scale * static_cast<double>(d_x) * (s.nu - s.theta);
        next.nu = s.nu + h * (y_bar + s.theta - 2.0 * s.nu);
        break;
      case MeanFieldVariant::pqn:
        next.theta = s.theta + h * (s.nu - s.theta);
        next.nu = s.nu + h * (y_bar + s.theta - 2.0 * s.nu);
        break;
      case MeanFieldVariant::pmga:
        next.nu = s.nu + h * (y_bar - s.nu);
        next.theta = next.nu;
        break;
    }
    path.push_back(next);
    s = next;
  }
  return path;
}

// ---------------------------------------------------------------------------
// Spectral radii of the 2x2 recursion matrices and the optimal step sizes.
// ---------------------------------------------------------------------------

struct SpectralReport {
  double d_x = 0.0;
  double h = 0.0;
  double rho_g = 0.0, rho_n = 0.0, rho_m = 0.0;
  double h_opt_g = 0.0, h_opt_n = 0.0, h_opt_m = 0.0;
  double rho_at_opt_g = 0.0, rho_at_opt_n = 0.0, rho_at_opt_m = 0.0;
};

inline double closed_form_rho_pga(Index d_x, double h) {
  const double half_root = 0.5 * std::sqrt(static_cast<double>(d_x) * static_cast<double>(d_x) + 4.0);
  const double base = 1.0 + 0.5 * static_cast<double>(d_x);
  return std::max(std::abs(1.0 - h * (base + half_root)), std::abs(1.0 - h * (base - half_root)));
}

inline double closed_form_rho_pqn(double h) {
  const double half_root = 0.5 * std::sqrt(5.0);
  return std::max(std::abs(1.0 - h * (1.5 + half_root)), std::abs(1.0 - h * (1.5 - half_root)));
}

inline double closed_form_rho_pmga(double h) { return std::abs(1.0 - h); }

inline Matrix recursion_matrix_pga(Index d_x, double h) {
  Matrix a(2, 2);
  a << 1.0 - h * static_cast<double>(d_x), h * static_cast<double>(d_x), h, 1.0 - 2.0 * h;
  return a;
}

inline Matrix recursion_matrix_pqn(double h) {
  Matrix a(2, 2);
  a << 1.0 - h, h, h, 1.0 - 2.0 * h;
  return a;
}

inline double numeric_spectral_radius(const Matrix& a) {
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  double rho = 0.0;
  for (Index i = 0; i < a.rows(); ++i) rho = std::max(rho, std::abs(solver.eigenvalues()[i]));
  return rho;
}

inline SpectralReport spectral_report(Index d_x, double h) {
  if (d_x < 1) throw ContractViolation("spectral_report: d_x must be positive");
  if (!(h > 0.0)) throw ContractViolation("spectral_report: h must be positive");
  SpectralReport r;
  r.d_x = static_cast<double>(d_x);
  r.h = h;
  r.rho_g = closed_form_rho_pga(d_x, h);
  r.rho_n = closed_form_rho_pqn(h);
  r.rho_m = closed_form_rho_pmga(h);
  r.h_opt_g = 2.0 / (2.0 + static_cast<double>(d_x));
  r.h_opt_n = 2.0 / 3.0;
  r.h_opt_m = 1.0;
  r.rho_at_opt_g = std::sqrt(r.d_x * r.d_x + 4.0) / (r.d_x + 2.0);
  r.rho_at_opt_n = std::sqrt(5.0) / 3.0;
  r.rho_at_opt_m = 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Finite-N stationary law of the marginally-corrected toy chain: per-particle
// marginal mean (y + y_bar 1) / 2, covariance (I + 1 1^T / (N D_x)) / 2, and
// unbiased theta estimates.
// ---------------------------------------------------------------------------

struct ToyStationaryLaw {
  Vector mean;
  Matrix cov;
  double theta_mean = 0.0;
};

inline ToyStationaryLaw finite_n_stationary_toy(Index d_x, Index n, const Vector& y) {
  if (y.size() != d_x) throw ContractViolation("finite_n_stationary_toy: y size mismatch");
  if (n < 1) throw ContractViolation("finite_n_stationary_toy: n must be positive");
  ToyStationaryLaw law;
  const double y_bar = y.mean();
  law.mean = 0.5 * (y.array() + y_bar).matrix();
  const double coupling = 1.0 / (static_cast<double>(n) * static_cast<double>(d_x));
  law.cov = 0.5 * (Matrix::Identity(d_x, d_x) + coupling * Matrix::Ones(d_x, d_x));
  law.theta_mean = y_bar;
  return law;
}

// ---------------------------------------------------------------------------
// Central finite-difference checks of the analytic derivatives.
// ---------------------------------------------------------------------------

struct FiniteDiffOptions {
  double base_step = 1e-5;      // step = base_step * (1 + |coordinate|)
  // 0 checks every coordinate; otherwise this many coordinates are sampled
  // per point (used for very high-dimensional latents).
  Index coord_subsample = 0;
  double point_scale = 1.0;     // random points are N(0, point_scale^2)
};

struct FiniteDiffReport {
  double worst_grad_theta = 0.0;
  double worst_grad_x = 0.0;
  double worst_hess_theta = 0.0;   // NaN-free zero when the capability is absent
  bool checked_hessian = false;
  double worst() const { return std::max({worst_grad_theta, worst_grad_x, worst_hess_theta}); }
};

namespace detail {

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (1.0 + std::abs(analytic));
}

inline std::vector<Index> pick_coords(Index dim, Index count, const CounterRng& rng,
                                      std::uint64_t tag) {
  std::vector<Index> coords;
  if (count <= 0 || count >= dim) {
    coords.resize(static_cast<std::size_t>(dim));
    for (Index i = 0; i < dim; ++i) coords[static_cast<std::size_t>(i)] = i;
    return coords;
  }
  coords.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i)
    coords.push_back(static_cast<Index>(rng.uniform_index(
        StreamKind::shuffle, tag, static_cast<std::uint64_t>(i), 1,
        static_cast<std::uint64_t>(dim))));
  return coords;
}

}  // namespace detail

inline FiniteDiffReport finite_difference_check(const LatentModel& model, int point_count,
                                                std::uint64_t seed,
                                                FiniteDiffOptions opts = {}) {
  CounterRng rng(seed);
  FiniteDiffReport report;
  report.checked_hessian = model.has_theta_hessian();
  const Index dt = model.theta_dim();
  const Index dx = model.latent_dim();

  for (int p = 0; p < point_count; ++p) {
    Vector theta(dt), x(dx);
    rng.fill_normal(StreamKind::init, static_cast<std::uint64_t>(p), 0, theta);
    rng.fill_normal(StreamKind::init, static_cast<std::uint64_t>(p), 1, x);
    theta *= opts.point_scale;
    x *= opts.point_scale;

    const Vector gt = model.grad_theta(theta, x);
    const Vector gx = model.grad_x(theta, x);

    for (Index i = 0; i < dt; ++i) {
      const double step = opts.base_step * (1.0 + std::abs(theta[i]));
      Vector tp = theta, tm = theta;
      tp[i] += step;
      tm[i] -= step;
      const double numeric = (model.log_joint(tp, x) - model.log_joint(tm, x)) / (2.0 * step);
      report.worst_grad_theta = std::max(report.worst_grad_theta, detail::rel_err(gt[i], numeric));
    }

    const auto coords = detail::pick_coords(dx, opts.coord_subsample, rng,
                                            static_cast<std::uint64_t>(p) + 1000);
    for (Index i : coords) {
      const double step = opts.base_step * (1.0 + std::abs(x[i]));
      Vector xp = x, xm = x;
      xp[i] += step;
      xm[i] -= step;
      const double numeric = (model.log_joint(theta, xp) - model.log_joint(theta, xm)) / (2.0 * step);
      report.worst_grad_x = std::max(report.worst_grad_x, detail::rel_err(gx[i], numeric));
    }

    if (report.checked_hessian) {
      const Matrix hess = model.neg_hess_theta(theta, x);
      if (!hess.isApprox(hess.transpose(), 1e-12))
        throw OracleError("neg_hess_theta is not symmetric for " + model.name());
      for (Index j = 0; j < dt; ++j) {
        const double step = opts.base_step * (1.0 + std::abs(theta[j]));
        Vector tp = theta, tm = theta;
        tp[j] += step;
        tm[j] -= step;
        const Vector column = -(model.grad_theta(tp, x) - model.grad_theta(tm, x)) / (2.0 * step);
        for (Index i = 0; i < dt; ++i)
          report.worst_hess_theta =
              std::max(report.worst_hess_theta, detail::rel_err(hess(i, j), column[i]));
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Quadrature oracle for one-dimensional latents: trapezoid-normalized
// posterior density on a grid, with coarseness checks.
// ---------------------------------------------------------------------------

inline Vector quadrature_grid(double center, double sd, Index points = 4001,
                              double half_width_sds = 8.0) {
  if (points < 3) throw ContractViolation("quadrature_grid: need at least 3 points");
  Vector grid(points);
  const double lo = center - half_width_sds * sd;
  const double hi = center + half_width_sds * sd;
  for (Index i = 0; i < points; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

inline double trapezoid(const Vector& grid, const Vector& values) {
  double total = 0.0;
  for (Index i = 0; i + 1 < grid.size(); ++i)
    total += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
  return total;
}

// Trapezoid-normalizes exp(log_values) on the grid. Raises OracleError when
// the grid is too coarse or too narrow: the density must vanish at the ends
// and the half-resolution integral must agree with the full one to 1e-8
// relative.
inline Vector quadrature_density(const Vector& grid, const Vector& log_values) {
  if (grid.size() != log_values.size())
    throw ContractViolation("quadrature_density: grid/value size mismatch");
  if (grid.size() < 5) throw OracleError("quadrature_density: grid too small");

  const double shift = log_values.maxCoeff();
  Vector density = (log_values.array() - shift).exp().matrix();

  const double mass = trapezoid(grid, density);
  if (!(mass > 0.0) || !std::isfinite(mass))
    throw OracleError("quadrature_density: degenerate density mass");

  if (density[0] > 1e-10 * density.maxCoeff() ||
      density[grid.size() - 1] > 1e-10 * density.maxCoeff())
    throw OracleError("quadrature_density: grid does not cover the density mass");

  // Richardson-style coarseness check against the even-index subgrid.
  Vector half_grid((grid.size() + 1) / 2), half_density((grid.size() + 1) / 2);
  for (Index i = 0, j = 0; i < grid.size(); i += 2, ++j) {
    half_grid[j] = grid[i];
    half_density[j] = density[i];
  }
  const double half_mass = trapezoid(half_grid, half_density);
  if (std::abs(half_mass - mass) > 1e-8 * mass)
    throw OracleError("quadrature_density: grid too coarse for the requested tolerance");

  return density / mass;
}

// Normalized p_theta(x | y) on the grid for a model with a scalar latent.
inline Vector quadrature_posterior_1d(const LatentModel& model, const Vector& theta,
                                      const Vector& grid) {
  if (model.latent_dim() != 1)
    throw ContractViolation("quadrature_posterior_1d: model must have a 1-d latent");
  Vector logs(grid.size());
  Vector point(1);
  for (Index i = 0; i < grid.size(); ++i) {
    point[0] = grid[i];
    logs[i] = model.log_joint(theta, point);
  }
  return quadrature_density(grid, logs);
}

}  // namespace pmle::oracles

#endif  // PMLE_ORACLES_HPP
