#ifndef PMLE_MODELS_LOGISTIC_REGRESSION_HPP
#define PMLE_MODELS_LOGISTIC_REGRESSION_HPP

#include <cmath>
#include <string>
#include <utility>

#include "pmle/model.hpp"

namespace pmle {

// Bayesian logistic regression with a learned prior location: latent weights
// x in R^d with prior N(theta 1, 5 I) and Bernoulli labels with mean
// sigmoid(f^T x). The log joint is
//
//   sum_m [l_m f_m^T x - softplus(f_m^T x)]
//     - |x - theta 1|^2 / 10 - (d/2) log(10 pi).
//
// The Gaussian normalizer is kept (nothing is dropped); the prior variance is
// fixed at 5.
class LogisticRegressionModel final : public LatentModel {
 public:
  LogisticRegressionModel(Matrix features, Eigen::VectorXi labels)
      : features_(std::move(features)), labels_(std::move(labels)) {
    if (features_.rows() != labels_.size())
      throw ContractViolation("logistic model: feature/label row counts differ");
    if (features_.rows() < 1) throw ContractViolation("logistic model: empty dataset");
    if (((labels_.array() != 0) && (labels_.array() != 1)).any())
      throw ContractViolation("logistic model: labels must be 0/1");
    labels_real_ = labels_.cast<double>();
  }

  static constexpr double prior_variance = 5.0;

  Index theta_dim() const override { return 1; }
  Index latent_dim() const override { return features_.cols(); }
  std::string name() const override { return "logistic-regression"; }

  Index data_count() const { return features_.rows(); }

  bool has_theta_hessian() const override { return true; }
  bool has_exact_m_step() const override { return true; }
  bool has_predictor() const override { return true; }

  double prob_label_one(const Vector& x, const Vector& features) const override {
    return sigmoid(features.dot(x));
  }

  Vector latent_from_standard_normal(const Vector& theta, const Vector& z) const override {
    return (std::sqrt(prior_variance) * z.array() + theta[0]).matrix();
  }

  Vector default_theta_scaling() const override {
    Vector s(1);
    s[0] = 1.0 / static_cast<double>(latent_dim());
    return s;
  }

  static double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }

  // log(1 + e^z) without overflow.
  static double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }

 protected:
  double do_log_joint(const Vector& theta, const Vector& x) const override {
    const Vector scores = features_ * x;
    double lik = 0.0;
    for (Index m = 0; m < scores.size(); ++m)
      lik += labels_real_[m] * scores[m] - softplus(scores[m]);
    const double d = static_cast<double>(latent_dim());
    const double quad = (x.array() - theta[0]).matrix().squaredNorm();
    return lik - quad / (2.0 * prior_variance) - 0.5 * d * std::log(2.0 * M_PI * prior_variance);
  }

  Vector do_grad_theta(const Vector& theta, const Vector& x) const override {
    Vector g(1);
    g[0] = (x.sum() - theta[0] * static_cast<double>(latent_dim())) / prior_variance;
    return g;
  }

  Vector do_grad_x(const Vector& theta, const Vector& x) const override {
    const Vector scores = features_ * x;
    Vector residual(scores.size());
    for (Index m = 0; m < scores.size(); ++m)
      residual[m] = labels_real_[m] - sigmoid(scores[m]);
    return (theta[0] - x.array()).matrix() / prior_variance +
           features_.transpose() * residual;
  }

  Matrix do_neg_hess_theta(const Vector&, const Vector&) const override {
    Matrix h(1, 1);
    h(0, 0) = static_cast<double>(latent_dim()) / prior_variance;
    return h;
  }

  Vector do_exact_m_step(const ParticleCloud& cloud) const override {
    Vector t(1);
    t[0] = cloud.points().mean();
    return t;
  }

 private:
  Matrix features_;
  Eigen::VectorXi labels_;
  Vector labels_real_;
};

}  // namespace pmle

#endif  // PMLE_MODELS_LOGISTIC_REGRESSION_HPP
