#ifndef PMLE_MODELS_TOY_HIERARCHICAL_HPP
#define PMLE_MODELS_TOY_HIERARCHICAL_HPP

#include <cmath>
#include <string>
#include <utility>

#include "pmle/model.hpp"
#include "pmle/rng.hpp"

namespace pmle {

// Gaussian hierarchical model with a scalar location parameter: D_x latent
// variables x_d ~ N(theta, 1) and observations y_d ~ N(x_d, 1). Everything is
// available in closed form, which makes this the workhorse for oracle tests:
//
//   log p_theta(x, y) = -D_x log(2 pi) - |x - theta 1|^2 / 2 - |y - x|^2 / 2
//   theta_*           = mean(y)
//   p_{theta}(x | y)  = N((y + theta 1) / 2, I / 2)
//
// log_joint keeps the full density including -D_x log(2 pi); nothing is
// dropped.
class ToyHierarchicalModel final : public LatentModel {
 public:
  explicit ToyHierarchicalModel(Vector observations) : y_(std::move(observations)) {
    if (y_.size() < 1) throw ContractViolation("toy model: need at least one observation");
  }

  // Draws y by simulating the model at the given theta.
  static ToyHierarchicalModel synthetic(Index dim, std::uint64_t seed, double theta_true = 1.0) {
    CounterRng rng(seed);
    Vector x(dim), noise(dim);
    rng.fill_normal(StreamKind::init, 0, 0, x);
    rng.fill_normal(StreamKind::init, 0, 1, noise);
    Vector y = (x.array() + theta_true + noise.array()).matrix();
    return ToyHierarchicalModel(std::move(y));
  }

  Index theta_dim() const override { return 1; }
  Index latent_dim() const override { return y_.size(); }
  std::string name() const override { return "toy-hierarchical"; }

  const Vector& observations() const { return y_; }

  // Marginal likelihood maximizer: the data's empirical mean.
  double theta_star() const { return y_.mean(); }

  // Exact posterior at theta: N((y + theta 1) / 2, I / 2).
  Vector posterior_mean(double theta) const { return 0.5 * (y_.array() + theta).matrix(); }
  static constexpr double posterior_variance() { return 0.5; }

  bool has_theta_hessian() const override { return true; }
  bool has_exact_m_step() const override { return true; }
  bool has_exact_em() const override { return true; }

  Vector exact_em_step(const Vector& theta) const override {
    if (theta.size() != 1) throw ContractViolation("toy model: theta must be scalar");
    Vector out(1);
    out[0] = 0.5 * (theta_star() + theta[0]);
    return out;
  }

  Vector latent_from_standard_normal(const Vector& theta, const Vector& z) const override {
    return (z.array() + theta[0]).matrix();
  }

  Vector default_theta_scaling() const override {
    Vector s(1);
    s[0] = 1.0 / static_cast<double>(latent_dim());
    return s;
  }

 protected:
  double do_log_joint(const Vector& theta, const Vector& x) const override {
    const double t = theta[0];
    const double prior = (x.array() - t).matrix().squaredNorm();
    const double lik = (y_ - x).squaredNorm();
    return -static_cast<double>(x.size()) * std::log(2.0 * M_PI) - 0.5 * prior - 0.5 * lik;
  }

  Vector do_grad_theta(const Vector& theta, const Vector& x) const override {
    Vector g(1);
    g[0] = x.sum() - theta[0] * static_cast<double>(x.size());
    return g;
  }

  Vector do_grad_x(const Vector& theta, const Vector& x) const override {
    return y_ - x - (x.array() - theta[0]).matrix();
  }

  Matrix do_neg_hess_theta(const Vector&, const Vector& x) const override {
    Matrix h(1, 1);
    h(0, 0) = static_cast<double>(x.size());
    return h;
  }

  Vector do_exact_m_step(const ParticleCloud& cloud) const override {
    Vector t(1);
    t[0] = cloud.points().mean();
    return t;
  }

 private:
  Vector y_;
};

}  // namespace pmle

#endif  // PMLE_MODELS_TOY_HIERARCHICAL_HPP
