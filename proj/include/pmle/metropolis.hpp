#ifndef PMLE_METROPOLIS_HPP
#define PMLE_METROPOLIS_HPP

#include <cassert>
#include <cmath>
#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "pmle/config.hpp"
#include "pmle/detail/reductions.hpp"
#include "pmle/errors.hpp"
#include "pmle/model.hpp"
#include "pmle/rng.hpp"

// Population-wide Metropolis-Hastings corrections: the whole particle cloud
// (and, in the joint variant, theta with it) is accepted or rejected as one
// block. All acceptance computations happen in log space.

namespace pmle {

// Log-density of the Langevin proposal kernel
//   K_theta(x, z) = N(z; x + h grad_x(theta, x), 2h I).
inline double log_ula_kernel(const LatentModel& model, const Vector& theta, const Vector& x,
                             const Vector& z, double h) {
  if (!(h > 0.0)) throw ContractViolation("log_ula_kernel: h must be positive");
  const Vector mean = x + h * model.grad_x(theta, x);
  const double dx = static_cast<double>(x.size());
  return -0.5 * dx * std::log(4.0 * M_PI * h) - (z - mean).squaredNorm() / (4.0 * h);
}

// log rho_N: the unnormalized population log-density sum_n l(theta*(x), x^n),
// with theta* the exact M-step of the cloud. Summed in particle order.
inline double log_rho_n(const LatentModel& model, const ParticleCloud& cloud) {
  const Vector theta = model.exact_m_step(cloud);
  const Index n = cloud.count();
  Vector terms(n);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) terms[i] = model.log_joint(theta, cloud.particle(i));
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += terms[i];
  return total;
}

// log of the product proposal density prod_n K_theta(from^n, to^n).
inline double log_kernel_product(const LatentModel& model, const Vector& theta,
                                 const ParticleCloud& from, const ParticleCloud& to, double h) {
  if (from.count() != to.count() || from.dim() != to.dim())
    throw ContractViolation("log_kernel_product: cloud shapes differ");
  const Index n = from.count();
  Vector terms(n);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i)
    terms[i] = log_ula_kernel(model, theta, from.particle(i), to.particle(i), h);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += terms[i];
  return total;
}

// Log acceptance ratio of the marginal move x -> z. The forward proposal runs
// at theta*(x); the reverse density is evaluated at theta*(z), reading the
// population kernel's definition literally.
inline double marginal_mh_log_ratio(const LatentModel& model, const ParticleCloud& x,
                                    const ParticleCloud& z, double h) {
  const Vector theta_x = model.exact_m_step(x);
  const Vector theta_z = model.exact_m_step(z);
  return log_rho_n(model, z) + log_kernel_product(model, theta_z, z, x, h) -
         log_rho_n(model, x) - log_kernel_product(model, theta_x, x, z, h);
}

// Log acceptance ratio of the joint move (theta, x) -> (psi, z).
inline double joint_mh_log_ratio(const LatentModel& model, const Vector& theta,
                                 const Vector& psi, const ParticleCloud& x,
                                 const ParticleCloud& z, double h) {
  const Index n = x.count();
  Vector terms_x(n), terms_z(n);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    terms_x[i] = model.log_joint(theta, x.particle(i));
    terms_z[i] = model.log_joint(psi, z.particle(i));
  }
  double joint_x = 0.0, joint_z = 0.0;
  for (Index i = 0; i < n; ++i) {
    joint_x += terms_x[i];
    joint_z += terms_z[i];
  }
  return log_kernel_product(model, psi, z, x, h) - log_kernel_product(model, theta, x, z, h) +
         joint_z - joint_x;
}

struct MhState {
  ParticleCloud cloud;
  Vector theta;        // used by the joint variant only
  long accepted = 0;
  long proposed = 0;

  MhState(ParticleCloud c, Vector t) : cloud(std::move(c)), theta(std::move(t)) {}

  double acceptance_rate() const {
    return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

namespace detail {

// Clamped before exponentiation so exp() of the result lies in [0, 1]; the
// accept test itself stays in log space.
inline double clamp_log_ratio(double log_ratio) {
  const double clamped = std::min(0.0, std::max(-745.0, log_ratio));
  assert(std::exp(clamped) >= 0.0 && std::exp(clamped) <= 1.0);
  return clamped;
}

// Draws the product-ULA proposal at the given theta.
inline ParticleCloud propose_ula_population(const LatentModel& model, const Vector& theta,
                                            const ParticleCloud& cloud, double h,
                                            const CounterRng& rng, long step) {
  const Index n = cloud.count();
  const Index dx = cloud.dim();
  const double noise_scale = std::sqrt(2.0 * h);
  ParticleCloud proposal(n, dx);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    const Vector x = cloud.particle(i);
    Vector w(dx);
    rng.fill_normal(StreamKind::latent_noise, static_cast<std::uint64_t>(step),
                    static_cast<std::uint64_t>(i), w);
    proposal.points().row(i) =
        (x + h * model.grad_x(theta, x) + noise_scale * w).transpose();
  }
  if (!proposal.all_finite()) throw DivergenceError("non-finite MH proposal", step);
  return proposal;
}

inline bool accept_with_log_ratio(double log_ratio, const CounterRng& rng, long step) {
  if (!std::isfinite(log_ratio) && !(log_ratio < 0.0))
    throw DivergenceError("non-finite MH acceptance ratio", step);
  const double log_u =
      std::log(rng.uniform(StreamKind::accept, static_cast<std::uint64_t>(step), 0));
  return log_u <= clamp_log_ratio(log_ratio);
}

}  // namespace detail

// One marginal MH move: propose the whole population from the product of ULA
// kernels at theta*(X); accept or keep the entire population.
inline void marginal_mh_step(const LatentModel& model, MhState& state, double h,
                             const CounterRng& rng, long step) {
  if (!(h > 0.0)) throw ContractViolation("marginal_mh_step: h must be positive");
  const Vector theta_x = model.exact_m_step(state.cloud);
  ParticleCloud proposal =
      detail::propose_ula_population(model, theta_x, state.cloud, h, rng, step);
  const double log_ratio = marginal_mh_log_ratio(model, state.cloud, proposal, h);
  ++state.proposed;
  if (detail::accept_with_log_ratio(log_ratio, rng, step)) {
    state.cloud = std::move(proposal);
    ++state.accepted;
  }
}

// One joint MH move: theta proposal psi = u(theta, cloud) with u the PGA or
// PQN theta rule, latent proposal from the ULA kernels at theta; both are
// accepted or rejected together.
inline void joint_mh_step(const LatentModel& model, MhState& state, MhThetaRule rule, double h,
                          const CounterRng& rng, long step) {
  if (!(h > 0.0)) throw ContractViolation("joint_mh_step: h must be positive");
  Vector psi;
  if (rule == MhThetaRule::pga) {
    psi = state.theta + h * detail::mean_grad_theta(model, state.theta, state.cloud);
  } else {
    const Matrix hess_sum = detail::sum_neg_hess_theta(model, state.theta, state.cloud);
    const Vector grad_sum = detail::mean_grad_theta(model, state.theta, state.cloud) *
                            static_cast<double>(state.cloud.count());
    Eigen::LDLT<Matrix> solver(hess_sum);
    if (solver.info() != Eigen::Success || !solver.isPositive() ||
        (solver.vectorD().array() <= 0.0).any())
      throw SingularHessianError("joint MH: summed negative Hessian is singular");
    psi = state.theta + h * solver.solve(grad_sum);
  }
  if (!psi.allFinite()) throw DivergenceError("non-finite MH theta proposal", step);

  ParticleCloud proposal =
      detail::propose_ula_population(model, state.theta, state.cloud, h, rng, step);
  const double log_ratio =
      joint_mh_log_ratio(model, state.theta, psi, state.cloud, proposal, h);
  ++state.proposed;
  if (detail::accept_with_log_ratio(log_ratio, rng, step)) {
    state.cloud = std::move(proposal);
    state.theta = psi;
    ++state.accepted;
  }
}

}  // namespace pmle

#endif  // PMLE_METROPOLIS_HPP
