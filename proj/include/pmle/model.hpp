#ifndef PMLE_MODEL_HPP
#define PMLE_MODEL_HPP

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pmle/errors.hpp"

namespace pmle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class ParticleCloud;

// A latent-variable model: the joint log-density log p_theta(x, y) over a
// parameter vector theta and a latent vector x, with the observations y baked
// into the instance. log_joint must keep every theta-dependent additive term
// (accept/reject ratios compare different theta values); terms constant in
// both theta and x may be dropped, and each model documents what it drops.
//
// Implementations override the do_* hooks; the public wrappers validate
// dimensions. All methods must be const and safe for concurrent calls.
class LatentModel {
 public:
  virtual ~LatentModel() = default;

  virtual Index theta_dim() const = 0;
  virtual Index latent_dim() const = 0;
  virtual std::string name() const = 0;

  double log_joint(const Vector& theta, const Vector& x) const {
    check_dims(theta, x, "log_joint");
    return do_log_joint(theta, x);
  }

  Vector grad_theta(const Vector& theta, const Vector& x) const {
    check_dims(theta, x, "grad_theta");
    return do_grad_theta(theta, x);
  }

  Vector grad_x(const Vector& theta, const Vector& x) const {
    check_dims(theta, x, "grad_x");
    return do_grad_x(theta, x);
  }

  // Optional: negative Hessian of log_joint in theta (required by PQN).
  virtual bool has_theta_hessian() const { return false; }
  Matrix neg_hess_theta(const Vector& theta, const Vector& x) const {
    check_dims(theta, x, "neg_hess_theta");
    if (!has_theta_hessian())
      throw UnsupportedCapability(name() + " does not provide neg_hess_theta");
    return do_neg_hess_theta(theta, x);
  }

  // Optional: the unique maximizer of theta -> sum_n log_joint(theta, x^n)
  // (required by PMGA and the Metropolis-Hastings corrections).
  virtual bool has_exact_m_step() const { return false; }
  Vector exact_m_step(const ParticleCloud& cloud) const;

  // Optional: one exact EM iteration on theta.
  virtual bool has_exact_em() const { return false; }
  virtual Vector exact_em_step(const Vector& theta) const {
    (void)theta;
    throw UnsupportedCapability(name() + " does not provide exact EM");
  }

  // Optional: predictive probability of label 1 given features (classifiers).
  virtual bool has_predictor() const { return false; }
  virtual double prob_label_one(const Vector& x, const Vector& features) const {
    (void)x;
    (void)features;
    throw UnsupportedCapability(name() + " does not provide a predictor");
  }

  // Transforms a standard-normal vector into a draw from the latent prior at
  // the given theta; used by the `prior` initialization policy.
  virtual Vector latent_from_standard_normal(const Vector& theta, const Vector& z) const {
    (void)theta;
    return z;
  }

  // Diagonal scaling for the stabilized theta update: reciprocal of the
  // per-coordinate term counts of grad_theta.
  virtual Vector default_theta_scaling() const { return Vector::Ones(theta_dim()); }

 protected:
  virtual double do_log_joint(const Vector& theta, const Vector& x) const = 0;
  virtual Vector do_grad_theta(const Vector& theta, const Vector& x) const = 0;
  virtual Vector do_grad_x(const Vector& theta, const Vector& x) const = 0;
  virtual Matrix do_neg_hess_theta(const Vector& theta, const Vector& x) const {
    (void)theta;
    (void)x;
    throw UnsupportedCapability(name() + " does not provide neg_hess_theta");
  }
  virtual Vector do_exact_m_step(const ParticleCloud& cloud) const;

 private:
  void check_dims(const Vector& theta, const Vector& x, const char* op) const {
    if (theta.size() != theta_dim())
      throw ContractViolation(std::string(op) + ": theta has size " +
                              std::to_string(theta.size()) + ", expected " +
                              std::to_string(theta_dim()));
    if (x.size() != latent_dim())
      throw ContractViolation(std::string(op) + ": x has size " + std::to_string(x.size()) +
                              ", expected " + std::to_string(latent_dim()));
  }
};

// N latent points in R^{D_x}; rows are particles. The shape is fixed at
// construction, only the coordinates change over a run.
class ParticleCloud {
 public:
  ParticleCloud(Index n_particles, Index dim) : points_(Matrix::Zero(n_particles, dim)) {
    if (n_particles < 1) throw ContractViolation("ParticleCloud: need at least one particle");
    if (dim < 1) throw ContractViolation("ParticleCloud: latent dimension must be positive");
  }

  explicit ParticleCloud(Matrix points) : points_(std::move(points)) {
    if (points_.rows() < 1) throw ContractViolation("ParticleCloud: need at least one particle");
    if (points_.cols() < 1) throw ContractViolation("ParticleCloud: latent dimension must be positive");
  }

  Index count() const { return points_.rows(); }
  Index dim() const { return points_.cols(); }

  const Matrix& points() const { return points_; }
  Matrix& points() { return points_; }

  Vector particle(Index n) const { return points_.row(n).transpose(); }

  bool all_finite() const { return points_.allFinite(); }

 private:
  Matrix points_;
};

inline Vector LatentModel::exact_m_step(const ParticleCloud& cloud) const {
  if (!has_exact_m_step())
    throw UnsupportedCapability(name() + " does not provide an exact M-step");
  if (cloud.dim() != latent_dim())
    throw ContractViolation("exact_m_step: cloud dimension mismatch");
  return do_exact_m_step(cloud);
}

inline Vector LatentModel::do_exact_m_step(const ParticleCloud& cloud) const {
  (void)cloud;
  throw UnsupportedCapability(name() + " does not provide an exact M-step");
}

// Current theta plus the running mean of the post-burn-in estimates. The
// average is a streaming mean accumulated in step order, so its value is a
// deterministic function of the recorded path.
class ParameterState {
 public:
  ParameterState(Vector theta0, long burn_in)
      : theta_(std::move(theta0)),
        theta_bar_(Vector::Zero(theta_.size())),
        burn_in_(burn_in) {
    if (burn_in < 0) throw ContractViolation("ParameterState: burn_in must be non-negative");
  }

  const Vector& theta() const { return theta_; }
  Vector& theta() { return theta_; }

  long step() const { return step_; }
  long burn_in() const { return burn_in_; }
  long averaged_count() const { return averaged_; }

  // Registers theta as the estimate after completing step `step_`+1.
  void record(const Vector& theta) {
    theta_ = theta;
    ++step_;
    if (step_ > burn_in_) {
      ++averaged_;
      theta_bar_ += (theta_ - theta_bar_) / static_cast<double>(averaged_);
    }
  }

  // Mean of the estimates recorded after the burn-in; theta itself before any
  // post-burn-in step has been recorded.
  Vector theta_bar() const { return averaged_ > 0 ? theta_bar_ : theta_; }
  bool has_average() const { return averaged_ > 0; }

 private:
  Vector theta_;
  Vector theta_bar_;
  long burn_in_ = 0;
  long step_ = 0;
  long averaged_ = 0;
};

// Positive-definite diagonal scaling applied to the theta gradient. Strictly
// positive entries keep the update's fixed points unchanged.
class Preconditioner {
 public:
  explicit Preconditioner(Vector diagonal) : diagonal_(std::move(diagonal)) {
    if ((diagonal_.array() <= 0.0).any())
      throw ContractViolation("Preconditioner: all diagonal entries must be positive");
  }

  const Vector& diagonal() const { return diagonal_; }
  Vector apply(const Vector& v) const { return diagonal_.cwiseProduct(v); }

 private:
  Vector diagonal_;
};

}  // namespace pmle

#endif  // PMLE_MODEL_HPP
