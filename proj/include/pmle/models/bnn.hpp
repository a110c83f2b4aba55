#ifndef PMLE_MODELS_BNN_HPP
#define PMLE_MODELS_BNN_HPP

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "pmle/model.hpp"

namespace pmle {

// Two-layer Bayesian classifier: hidden layer tanh(W f) with H units, two
// output logits V tanh(W f), no biases. The latent vector stacks w (H x d_in,
// row-major) then v (2 x H, row-major); theta = (alpha, beta) are the log
// standard deviations of the two isotropic Gaussian weight priors:
//
//   w ~ N(0, e^{2 alpha} I),  v ~ N(0, e^{2 beta} I),
//   p(l | f, x) = exp(logit_l) / (exp(logit_0) + exp(logit_1)).
//
// Log class-probabilities are evaluated as logit_l - logsumexp(logits); the
// latent gradient is hand-written reverse mode for this fixed architecture.
// The full density is kept, including both Gaussian normalizers.
class BnnModel final : public LatentModel {
 public:
  BnnModel(Matrix features, Eigen::VectorXi labels, Index hidden)
      : features_(std::move(features)), labels_(std::move(labels)), hidden_(hidden) {
    if (features_.rows() != labels_.size())
      throw ContractViolation("bnn model: feature/label row counts differ");
    if (features_.rows() < 1) throw ContractViolation("bnn model: empty dataset");
    if (hidden_ < 1) throw ContractViolation("bnn model: need at least one hidden unit");
    if (((labels_.array() != 0) && (labels_.array() != 1)).any())
      throw ContractViolation("bnn model: labels must be 0/1");
  }

  Index theta_dim() const override { return 2; }
  Index latent_dim() const override { return w_dim() + v_dim(); }
  std::string name() const override { return "bnn"; }

  Index hidden_units() const { return hidden_; }
  Index input_dim() const { return features_.cols(); }
  Index w_dim() const { return hidden_ * features_.cols(); }
  Index v_dim() const { return 2 * hidden_; }
  Index data_count() const { return features_.rows(); }

  bool has_theta_hessian() const override { return true; }
  bool has_exact_m_step() const override { return true; }
  bool has_predictor() const override { return true; }

  // Both class probabilities for one datapoint.
  std::array<double, 2> class_probabilities(const Vector& x, const Vector& f) const {
    if (x.size() != latent_dim()) throw ContractViolation("bnn: latent size mismatch");
    if (f.size() != input_dim()) throw ContractViolation("bnn: feature size mismatch");
    const auto w = map_w(x);
    const auto v = map_v(x);
    const Vector hidden = (w * f).array().tanh().matrix();
    const Vector logits = v * hidden;
    const double shift = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - shift);
    const double e1 = std::exp(logits[1] - shift);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
  }

  double prob_label_one(const Vector& x, const Vector& f) const override {
    return class_probabilities(x, f)[1];
  }

  Vector latent_from_standard_normal(const Vector& theta, const Vector& z) const override {
    if (z.size() != latent_dim()) throw ContractViolation("bnn: latent size mismatch");
    Vector x(z.size());
    x.head(w_dim()) = std::exp(theta[0]) * z.head(w_dim());
    x.tail(v_dim()) = std::exp(theta[1]) * z.tail(v_dim());
    return x;
  }

  Vector default_theta_scaling() const override {
    Vector s(2);
    s[0] = 1.0 / static_cast<double>(w_dim());
    s[1] = 1.0 / static_cast<double>(v_dim());
    return s;
  }

 protected:
  double do_log_joint(const Vector& theta, const Vector& x) const override {
    const double alpha = theta[0], beta = theta[1];
    const double dw = static_cast<double>(w_dim());
    const double dv = static_cast<double>(v_dim());
    const auto w = map_w(x);
    const auto v = map_v(x);

    double value = -dw * alpha - 0.5 * std::exp(-2.0 * alpha) * w.squaredNorm() -
                   dv * beta - 0.5 * std::exp(-2.0 * beta) * v.squaredNorm() -
                   0.5 * (dw + dv) * std::log(2.0 * M_PI);

    const Matrix hidden = (features_ * w.transpose()).array().tanh().matrix();  // M x H
    const Matrix logits = hidden * v.transpose();                               // M x 2
    for (Index m = 0; m < features_.rows(); ++m) {
      const double shift = std::max(logits(m, 0), logits(m, 1));
      const double lse =
          shift + std::log(std::exp(logits(m, 0) - shift) + std::exp(logits(m, 1) - shift));
      value += logits(m, labels_[m]) - lse;
    }
    return value;
  }

  Vector do_grad_theta(const Vector& theta, const Vector& x) const override {
    const auto w = map_w(x);
    const auto v = map_v(x);
    Vector g(2);
    g[0] = w.squaredNorm() * std::exp(-2.0 * theta[0]) - static_cast<double>(w_dim());
    g[1] = v.squaredNorm() * std::exp(-2.0 * theta[1]) - static_cast<double>(v_dim());
    return g;
  }

  Vector do_grad_x(const Vector& theta, const Vector& x) const override {
    const auto w = map_w(x);
    const auto v = map_v(x);

    const Matrix hidden = (features_ * w.transpose()).array().tanh().matrix();  // M x H
    const Matrix logits = hidden * v.transpose();                               // M x 2

    Matrix delta(features_.rows(), 2);  // d log p(l_m | f_m) / d logits
    for (Index m = 0; m < features_.rows(); ++m) {
      const double shift = std::max(logits(m, 0), logits(m, 1));
      const double e0 = std::exp(logits(m, 0) - shift);
      const double e1 = std::exp(logits(m, 1) - shift);
      const double p1 = e1 / (e0 + e1);
      delta(m, 0) = (labels_[m] == 0 ? 1.0 : 0.0) - (1.0 - p1);
      delta(m, 1) = (labels_[m] == 1 ? 1.0 : 0.0) - p1;
    }

    const Matrix grad_v = delta.transpose() * hidden;                        // 2 x H
    const Matrix d_hidden = (delta * v).cwiseProduct(
        (1.0 - hidden.array().square()).matrix());                           // M x H
    const Matrix grad_w = d_hidden.transpose() * features_;                  // H x d_in

    Vector g(latent_dim());
    auto gw = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        g.data(), hidden_, input_dim());
    auto gv = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        g.data() + w_dim(), 2, hidden_);
    gw = grad_w - std::exp(-2.0 * theta[0]) * w;
    gv = grad_v - std::exp(-2.0 * theta[1]) * v;
    return g;
  }

  Matrix do_neg_hess_theta(const Vector& theta, const Vector& x) const override {
    const auto w = map_w(x);
    const auto v = map_v(x);
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = 2.0 * w.squaredNorm() * std::exp(-2.0 * theta[0]);
    h(1, 1) = 2.0 * v.squaredNorm() * std::exp(-2.0 * theta[1]);
    return h;
  }

  Vector do_exact_m_step(const ParticleCloud& cloud) const override {
    double w_norms = 0.0, v_norms = 0.0;
    for (Index n = 0; n < cloud.count(); ++n) {
      w_norms += cloud.points().row(n).head(w_dim()).squaredNorm();
      v_norms += cloud.points().row(n).tail(v_dim()).squaredNorm();
    }
    const double count = static_cast<double>(cloud.count());
    Vector t(2);
    t[0] = 0.5 * std::log(w_norms / (count * static_cast<double>(w_dim())));
    t[1] = 0.5 * std::log(v_norms / (count * static_cast<double>(v_dim())));
    return t;
  }

 private:
  using RowMajorMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  RowMajorMap map_w(const Vector& x) const {
    return RowMajorMap(x.data(), hidden_, input_dim());
  }
  RowMajorMap map_v(const Vector& x) const {
    return RowMajorMap(x.data() + w_dim(), 2, hidden_);
  }

  Matrix features_;
  Eigen::VectorXi labels_;
  Index hidden_;
};

}  // namespace pmle

#endif  // PMLE_MODELS_BNN_HPP
