#include <catch2/catch.hpp>

#include <cmath>

#include "pmle/data.hpp"
#include "pmle/models/bnn.hpp"
#include "pmle/oracles.hpp"
#include "pmle/samplers.hpp"

using namespace pmle;

namespace {

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

BnnModel small_model() {
  const Dataset data = synthetic_bnn(30, 6, 77, 78);
  return BnnModel(data.train_features(), data.train_labels(), 4);
}

}  // namespace

TEST_CASE("theta gradient at zero weights", "[bnn]") {
  const auto model = small_model();
  const Vector x = Vector::Zero(model.latent_dim());
  const Vector g = model.grad_theta(vec({0.0, 0.0}), x);
  REQUIRE(g[0] == Approx(-static_cast<double>(model.w_dim())));
  REQUIRE(g[1] == Approx(-static_cast<double>(model.v_dim())));
}

TEST_CASE("theta Hessian is diagonal in the squared norms", "[bnn]") {
  const auto model = small_model();
  Vector x = Vector::Zero(model.latent_dim());
  x.head(model.w_dim()).setConstant(2.0);
  x.tail(model.v_dim()).setConstant(-1.0);
  const Matrix h = model.neg_hess_theta(vec({0.3, -0.2}), x);
  REQUIRE(h(0, 1) == 0.0);
  REQUIRE(h(1, 0) == 0.0);
  REQUIRE(h(0, 0) ==
          Approx(2.0 * 4.0 * model.w_dim() * std::exp(-0.6)).epsilon(1e-12));
  REQUIRE(h(1, 1) == Approx(2.0 * 1.0 * model.v_dim() * std::exp(0.4)).epsilon(1e-12));
}

TEST_CASE("zero weights make pqn refuse to run", "[bnn]") {
  const auto model = small_model();
  REQUIRE(model.neg_hess_theta(vec({0.0, 0.0}), Vector::Zero(model.latent_dim()))
              .isZero());
  ParticleCloud cloud(2, model.latent_dim());
  Vector theta = vec({0.0, 0.0});
  CounterRng rng(3);
  REQUIRE_THROWS_AS(pqn_step(model, theta, cloud, 0.1, rng, 1), SingularHessianError);
}

TEST_CASE("class probabilities are half at zero output weights", "[bnn]") {
  const auto model = small_model();
  Vector x = Vector::Zero(model.latent_dim());
  x.head(model.w_dim()).setRandom();
  Vector f(6);
  f << 0.1, -0.3, 0.7, 0.2, -0.5, 0.4;
  const auto probs = model.class_probabilities(x, f);
  REQUIRE(probs[0] == Approx(0.5).epsilon(1e-15));
  REQUIRE(probs[1] == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("class probabilities sum to one", "[bnn]") {
  const auto model = small_model();
  CounterRng rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    Vector x(model.latent_dim()), f(6);
    rng.fill_normal(StreamKind::init, rep, 0, x);
    rng.fill_normal(StreamKind::init, rep, 1, f);
    x *= 3.0;
    const auto probs = model.class_probabilities(x, f);
    REQUIRE(probs[0] >= 0.0);
    REQUIRE(probs[1] >= 0.0);
    REQUIRE(probs[0] + probs[1] == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("exact M-step recovers the prior scale", "[bnn]") {
  const auto model = small_model();
  Matrix pts(1, model.latent_dim());
  pts.setZero();
  // |w|^2 = D_w makes alpha* = 0; v entries at +/- 2 make beta* = log 2.
  pts.row(0).head(model.w_dim()).setOnes();
  pts.row(0).tail(model.v_dim()).setConstant(2.0);
  const Vector star = model.exact_m_step(ParticleCloud(pts));
  REQUIRE(star[0] == Approx(0.0).margin(1e-14));
  REQUIRE(star[1] == Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("m-step stationarity is exact for the bnn", "[bnn]") {
  const auto model = small_model();
  CounterRng rng(61);
  Matrix pts(3, model.latent_dim());
  for (Index i = 0; i < 3; ++i) {
    Vector row(model.latent_dim());
    rng.fill_normal(StreamKind::init, 0, static_cast<std::uint64_t>(i), row);
    pts.row(i) = (2.0 * row).transpose();
  }
  const ParticleCloud cloud(pts);
  const Vector star = model.exact_m_step(cloud);
  Vector grad_mean = Vector::Zero(2);
  for (Index i = 0; i < 3; ++i) grad_mean += model.grad_theta(star, cloud.particle(i));
  grad_mean /= 3.0;
  REQUIRE(grad_mean.norm() <= 1e-8 * (1.0 + star.norm()));
}

TEST_CASE("latent gradient passes spot finite differences", "[bnn]") {
  const auto model = small_model();
  oracles::FiniteDiffOptions opts;
  opts.coord_subsample = 20;
  const auto report = oracles::finite_difference_check(model, 20, 41, opts);
  REQUIRE(report.worst_grad_x < 1e-4);
  REQUIRE(report.worst_grad_theta < 1e-6);
  REQUIRE(report.worst_hess_theta < 1e-6);
}

TEST_CASE("bnn log density falls off along rays", "[bnn]") {
  const auto model = small_model();
  CounterRng rng(51);
  Vector direction(model.latent_dim());
  rng.fill_normal(StreamKind::init, 0, 0, direction);
  direction.normalize();
  const Vector theta = vec({0.0, 0.0});
  double previous = model.log_joint(theta, Vector::Zero(model.latent_dim()));
  for (double radius : {10.0, 100.0, 1000.0}) {
    const double value = model.log_joint(theta, radius * direction);
    REQUIRE(value < previous);
    previous = value;
  }
}

TEST_CASE("prior transform scales the two blocks", "[bnn]") {
  const auto model = small_model();
  Vector z = Vector::Ones(model.latent_dim());
  const Vector x = model.latent_from_standard_normal(vec({std::log(3.0), std::log(0.5)}), z);
  REQUIRE(x[0] == Approx(3.0));
  REQUIRE(x[model.w_dim()] == Approx(0.5));
}

TEST_CASE("default scaling is the reciprocal block size", "[bnn]") {
  const auto model = small_model();
  const Vector s = model.default_theta_scaling();
  REQUIRE(s[0] == Approx(1.0 / static_cast<double>(model.w_dim())));
  REQUIRE(s[1] == Approx(1.0 / static_cast<double>(model.v_dim())));
}

TEST_CASE("scaled pga stays stable on the bnn at moderate h", "[bnn][slow]") {
  const Dataset data = synthetic_bnn(40, 8, 91, 92);
  const BnnModel model(data.train_features(), data.train_labels(), 4);

  RunConfig config;
  config.algorithm = Algorithm::pga_scaled;
  config.step_size = 0.1;
  config.n_particles = 5;
  config.n_steps = 200;
  config.burn_in = 100;
  config.seed = 7;
  config.init = InitPolicy::prior();
  const Trace trace = run(model, config);
  REQUIRE(trace.theta_path.allFinite());

  RunConfig soul_cfg = config;
  soul_cfg.algorithm = Algorithm::soul;
  soul_cfg.theta_scaling = model.default_theta_scaling();
  const Trace soul_trace = run(model, soul_cfg);
  REQUIRE(soul_trace.theta_path.allFinite());
}
