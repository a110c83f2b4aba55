#ifndef PMLE_SAMPLERS_HPP
#define PMLE_SAMPLERS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pmle/config.hpp"
#include "pmle/detail/reductions.hpp"
#include "pmle/errors.hpp"
#include "pmle/metropolis.hpp"
#include "pmle/model.hpp"
#include "pmle/rng.hpp"

namespace pmle {

// All steps read the step-k state on both halves: the theta update and the
// latent update both see the pre-step cloud and the pre-step theta. Gaussian
// innovations are addressed by (seed, step, particle), so any particle
// evaluation order yields the same result bit for bit.

namespace detail {

inline void ensure_finite_cloud(const ParticleCloud& cloud, long step) {
  if (!cloud.all_finite())
    throw DivergenceError("non-finite particle coordinate", step);
}

inline void ensure_finite_theta(const Vector& theta, long step) {
  if (!theta.allFinite()) throw DivergenceError("non-finite theta", step);
}

}  // namespace detail

// One unadjusted Langevin move per particle at a fixed theta:
//   x' = x + h grad_x(theta, x) + sqrt(2h) w,   w ~ N(0, I).
// h = 0 degenerates to the identity.
inline void ula_step(const LatentModel& model, const Vector& theta, ParticleCloud& cloud,
                     double h, const CounterRng& rng, long step) {
  if (!(h >= 0.0)) throw ContractViolation("ula_step: h must be non-negative");
  const Index n = cloud.count();
  const Index dx = cloud.dim();
  const double noise_scale = std::sqrt(2.0 * h);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    const Vector x = cloud.particle(i);
    Vector w(dx);
    rng.fill_normal(StreamKind::latent_noise, static_cast<std::uint64_t>(step),
                    static_cast<std::uint64_t>(i), w);
    cloud.points().row(i) = (x + h * model.grad_x(theta, x) + noise_scale * w).transpose();
  }
  detail::ensure_finite_cloud(cloud, step);
}

// Particle gradient ascent: theta moves along the cloud-averaged theta
// gradient (optionally rescaled by a positive diagonal), then the cloud takes
// one ULA move at the pre-step theta.
inline void pga_step(const LatentModel& model, Vector& theta, ParticleCloud& cloud, double h,
                     const CounterRng& rng, long step,
                     const Preconditioner* precond = nullptr) {
  if (!(h > 0.0)) throw ContractViolation("pga_step: h must be positive");
  Vector direction = detail::mean_grad_theta(model, theta, cloud);
  if (precond != nullptr) direction = precond->apply(direction);
  const Vector theta_next = theta + h * direction;
  ula_step(model, theta, cloud, h, rng, step);
  theta = theta_next;
  detail::ensure_finite_theta(theta, step);
}

// Particle quasi-Newton: the summed gradient is solved against the summed
// negative Hessian (no explicit inverse), then the usual ULA move.
inline void pqn_step(const LatentModel& model, Vector& theta, ParticleCloud& cloud, double h,
                     const CounterRng& rng, long step) {
  if (!(h > 0.0)) throw ContractViolation("pqn_step: h must be positive");
  const Matrix hess_sum = detail::sum_neg_hess_theta(model, theta, cloud);
  const Vector grad_sum =
      detail::mean_grad_theta(model, theta, cloud) * static_cast<double>(cloud.count());

  Eigen::LDLT<Matrix> solver(hess_sum);
  if (solver.info() != Eigen::Success || !solver.isPositive() ||
      (solver.vectorD().array() <= 0.0).any())
    throw SingularHessianError("PQN: summed negative Hessian is singular or not positive definite");
  const Vector delta = solver.solve(grad_sum);
  if (!((hess_sum * delta - grad_sum).norm() <= 1e-10 * (1.0 + grad_sum.norm())))
    throw SingularHessianError("PQN: linear solve failed to reach the required residual");

  const Vector theta_next = theta + h * delta;
  ula_step(model, theta, cloud, h, rng, step);
  theta = theta_next;
  detail::ensure_finite_theta(theta, step);
}

// Particle marginal gradient ascent: the cloud moves at the exact M-step of
// the pre-step cloud. Returns the theta consumed by the update.
inline Vector pmga_step(const LatentModel& model, ParticleCloud& cloud, double h,
                        const CounterRng& rng, long step) {
  if (!(h >= 0.0)) throw ContractViolation("pmga_step: h must be non-negative");
  const Vector theta = model.exact_m_step(cloud);
  detail::ensure_finite_theta(theta, step);
  ula_step(model, theta, cloud, h, rng, step);
  return theta;
}

// SOUL baseline: the PGA theta half on the previous cloud, then one serial
// ULA chain of length N started from the previous cloud's last particle; the
// chain states become the new cloud. Intrinsically sequential in n; the n-th
// chain move consumes the same draw as particle n of a parallel step, so the
// N = 1 path coincides with PGA's.
inline void soul_step(const LatentModel& model, Vector& theta, ParticleCloud& cloud, double h,
                      const CounterRng& rng, long step,
                      const Preconditioner* precond = nullptr) {
  if (!(h > 0.0)) throw ContractViolation("soul_step: h must be positive");
  Vector direction = detail::mean_grad_theta(model, theta, cloud);
  if (precond != nullptr) direction = precond->apply(direction);
  const Vector theta_next = theta + h * direction;

  const Index n = cloud.count();
  const double noise_scale = std::sqrt(2.0 * h);
  Vector state = cloud.particle(n - 1);
  Vector w(cloud.dim());
  for (Index i = 0; i < n; ++i) {
    rng.fill_normal(StreamKind::latent_noise, static_cast<std::uint64_t>(step),
                    static_cast<std::uint64_t>(i), w);
    state = state + h * model.grad_x(theta, state) + noise_scale * w;
    cloud.points().row(i) = state.transpose();
  }
  detail::ensure_finite_cloud(cloud, step);
  theta = theta_next;
  detail::ensure_finite_theta(theta, step);
}

// ---------------------------------------------------------------------------
// Run driver.
// ---------------------------------------------------------------------------

namespace detail {

inline bool should_snapshot(const RunConfig& config, long step) {
  if (step == config.n_steps) return true;
  return config.snapshot_every > 0 && step % config.snapshot_every == 0;
}

inline Trace drive(const LatentModel& model, const RunConfig& config, Vector theta0,
                   ParticleCloud cloud) {
  const auto t_start = std::chrono::steady_clock::now();
  CounterRng rng(config.seed);
  ParameterState state(std::move(theta0), config.burn_in);

  const auto scaling = config.resolved_scaling(model);
  std::optional<Preconditioner> precond;
  if (scaling) precond.emplace(*scaling);
  const Preconditioner* precond_ptr = precond ? &*precond : nullptr;

  const bool is_mh =
      config.algorithm == Algorithm::mh_marginal || config.algorithm == Algorithm::mh_joint;
  MhState mh_state(std::move(cloud), state.theta());
  ParticleCloud& live_cloud = mh_state.cloud;

  Trace trace;
  trace.theta_path.resize(config.n_steps, model.theta_dim());

  for (long step = 1; step <= config.n_steps; ++step) {
    switch (config.algorithm) {
      case Algorithm::pga:
      case Algorithm::pga_scaled: {
        Vector th = state.theta();
        pga_step(model, th, live_cloud, config.step_size, rng, step, precond_ptr);
        state.record(th);
        break;
      }
      case Algorithm::pqn: {
        Vector th = state.theta();
        pqn_step(model, th, live_cloud, config.step_size, rng, step);
        state.record(th);
        break;
      }
      case Algorithm::pmga: {
        pmga_step(model, live_cloud, config.step_size, rng, step);
        state.record(model.exact_m_step(live_cloud));
        break;
      }
      case Algorithm::soul: {
        Vector th = state.theta();
        soul_step(model, th, live_cloud, config.step_size, rng, step, precond_ptr);
        state.record(th);
        break;
      }
      case Algorithm::mh_marginal: {
        marginal_mh_step(model, mh_state, config.step_size, rng, step);
        state.record(model.exact_m_step(mh_state.cloud));
        break;
      }
      case Algorithm::mh_joint: {
        joint_mh_step(model, mh_state, config.mh_theta_rule, config.step_size, rng, step);
        state.record(mh_state.theta);
        break;
      }
      case Algorithm::em_exact: {
        state.record(model.exact_em_step(state.theta()));
        break;
      }
    }
    trace.theta_path.row(step - 1) = state.theta().transpose();
    if (config.algorithm != Algorithm::em_exact && should_snapshot(config, step) &&
        (trace.clouds.empty() || trace.clouds.back().first != step))
      trace.clouds.emplace_back(step, live_cloud.points());
  }

  trace.theta_bar_final = state.theta_bar();
  if (is_mh) trace.acceptance_rate = mh_state.acceptance_rate();
  trace.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return trace;
}

inline std::pair<Vector, ParticleCloud> initial_state(const LatentModel& model,
                                                      const RunConfig& config) {
  const Index dx = model.latent_dim();
  Vector theta = Vector::Zero(model.theta_dim());
  ParticleCloud cloud(config.n_particles, dx);

  switch (config.init.kind) {
    case InitPolicy::Kind::zeros:
      break;
    case InitPolicy::Kind::constant:
      theta.setConstant(config.init.value);
      cloud.points().setConstant(config.init.value);
      break;
    case InitPolicy::Kind::prior: {
      CounterRng rng(config.seed);
      Vector z(dx);
      for (Index i = 0; i < config.n_particles; ++i) {
        rng.fill_normal(StreamKind::init, 0, static_cast<std::uint64_t>(i), z);
        cloud.points().row(i) = model.latent_from_standard_normal(theta, z).transpose();
      }
      break;
    }
    case InitPolicy::Kind::warm_start:
      // Resolved by the experiment layer into run_from(); reaching this point
      // means the state file was never loaded.
      throw ConfigError("warm-start initialization requires a resolved state file");
  }
  return {std::move(theta), std::move(cloud)};
}

}  // namespace detail

// Drives the configured algorithm for K steps and records the theta estimate
// after every step. Row k of the path is:
//   PGA/PQN/SOUL/EM: theta_k;  PMGA and MH-marginal: the exact M-step of the
//   step-k cloud;  MH-joint: the (possibly rejected) chain theta.
inline Trace run(const LatentModel& model, const RunConfig& config) {
  config.validate(model);
  auto [theta, cloud] = detail::initial_state(model, config);
  return detail::drive(model, config, std::move(theta), std::move(cloud));
}

// Warm-start variant: runs from an explicitly provided initial state. A cloud
// with a single row is replicated to n_particles.
inline Trace run_from(const LatentModel& model, const RunConfig& config, const Vector& theta0,
                      const Matrix& cloud0) {
  if (theta0.size() != model.theta_dim())
    throw ConfigError("warm start: theta size does not match the model");
  if (cloud0.cols() != model.latent_dim())
    throw ConfigError("warm start: cloud dimension does not match the model");
  if (cloud0.rows() != config.n_particles && cloud0.rows() != 1)
    throw ConfigError("warm start: cloud must have 1 row or n_particles rows");

  RunConfig patched = config;
  patched.init = InitPolicy::zeros();
  patched.validate(model);

  Matrix points;
  if (cloud0.rows() == config.n_particles) {
    points = cloud0;
  } else {
    points = cloud0.replicate(config.n_particles, 1);
  }
  return detail::drive(model, patched, theta0, ParticleCloud(std::move(points)));
}

}  // namespace pmle

#endif  // PMLE_SAMPLERS_HPP
