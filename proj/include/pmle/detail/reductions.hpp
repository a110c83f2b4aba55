#ifndef PMLE_DETAIL_REDUCTIONS_HPP
#define PMLE_DETAIL_REDUCTIONS_HPP

#include <vector>

#include <Eigen/Dense>

#include "pmle/model.hpp"

namespace pmle::detail {

// Per-particle terms are computed in parallel into preallocated slots and
// reduced serially in particle order, so the result does not depend on the
// worker count.

inline Vector mean_grad_theta(const LatentModel& model, const Vector& theta,
                              const ParticleCloud& cloud) {
  const Index n = cloud.count();
  Matrix grads(n, model.theta_dim());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i)
    grads.row(i) = model.grad_theta(theta, cloud.particle(i)).transpose();
  Vector sum = Vector::Zero(model.theta_dim());
  for (Index i = 0; i < n; ++i) sum += grads.row(i).transpose();
  return sum / static_cast<double>(n);
}

inline Matrix sum_neg_hess_theta(const LatentModel& model, const Vector& theta,
                                 const ParticleCloud& cloud) {
  const Index n = cloud.count();
  const Index dt = model.theta_dim();
  std::vector<Matrix> terms(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i)
    terms[static_cast<std::size_t>(i)] = model.neg_hess_theta(theta, cloud.particle(i));
  Matrix sum = Matrix::Zero(dt, dt);
  for (Index i = 0; i < n; ++i) sum += terms[static_cast<std::size_t>(i)];
  return sum;
}

}  // namespace pmle::detail

#endif  // PMLE_DETAIL_REDUCTIONS_HPP
