#include <catch2/catch.hpp>

#include <cmath>

#include "pmle/models/toy_hierarchical.hpp"
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

}  // namespace

TEST_CASE("ula step with h = 0 is the identity", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(3, 1);
  ParticleCloud cloud(2, 3);
  cloud.points() << 1.0, -2.0, 0.5, 0.0, 3.0, -1.0;
  const Matrix before = cloud.points();
  CounterRng rng(9);
  ula_step(model, vec({0.7}), cloud, 0.0, rng, 1);
  REQUIRE(cloud.points() == before);
}

TEST_CASE("ula step from the mode is pure noise", "[samplers]") {
  // theta = 0, y = 0, x = 0: the drift vanishes and the output is sqrt(2h) w.
  ToyHierarchicalModel model(vec({0.0}));
  ParticleCloud cloud(1, 1);
  const double h = 0.3;
  CounterRng rng(77);
  ula_step(model, vec({0.0}), cloud, h, rng, 5);
  const double w = CounterRng(77).normal(StreamKind::latent_noise, 5, 0, 0);
  REQUIRE(cloud.points()(0, 0) == Approx(std::sqrt(2.0 * h) * w).epsilon(1e-15));
}

TEST_CASE("frozen-theta ula chain shows the discretization bias", "[samplers][slow]") {
  // Single particle at theta = theta*: the chain's stationary variance is the
  // biased value 0.5 / (1 - h), strictly above the exact posterior's 0.5.
  const auto model = ToyHierarchicalModel::synthetic(1, 2);
  const double star = model.theta_star();
  const Vector theta = (Vector(1) << star).finished();
  const double h = 0.5;

  ParticleCloud cloud(1, 1);
  cloud.points()(0, 0) = model.posterior_mean(star)[0];
  CounterRng rng(14);
  const long burn = 500, keep = 50000;
  double sum = 0.0, sum_sq = 0.0;
  for (long step = 1; step <= burn + keep; ++step) {
    ula_step(model, theta, cloud, h, rng, step);
    if (step <= burn) continue;
    const double x = cloud.points()(0, 0);
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / keep;
  const double variance = sum_sq / keep - mean * mean;
  REQUIRE(variance > 0.6);  // strictly above the exact 0.5
  REQUIRE(variance == Approx(0.5 / (1.0 - h)).margin(0.05));
}

TEST_CASE("pmga with h = 0 and zero noise is the identity", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(2, 3);
  ParticleCloud cloud(3, 2);
  cloud.points().setRandom();
  const Matrix before = cloud.points();
  CounterRng rng(4);
  const Vector theta = pmga_step(model, cloud, 0.0, rng, 1);
  REQUIRE(cloud.points() == before);
  REQUIRE(theta[0] == Approx(before.mean()));
}

TEST_CASE("pga theta half matches the closed form", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(4, 3);
  ParticleCloud cloud(3, 4);
  cloud.points().setRandom();
  const double h = 0.05;
  const double cloud_mean = cloud.points().mean();

  Vector theta = vec({0.2});
  CounterRng rng(11);
  pga_step(model, theta, cloud, h, rng, 1);
  REQUIRE(theta[0] == Approx(0.2 + h * 4.0 * (cloud_mean - 0.2)).epsilon(1e-12));
}

TEST_CASE("scaled pga with the model default coincides with pqn", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(6, 4);
  ParticleCloud cloud_a(2, 6), cloud_b(2, 6);
  cloud_a.points().setRandom();
  cloud_b.points() = cloud_a.points();

  Vector theta_a = vec({1.5}), theta_b = vec({1.5});
  const double h = 0.4;
  CounterRng rng(21);
  Preconditioner lambda(model.default_theta_scaling());
  pga_step(model, theta_a, cloud_a, h, rng, 1, &lambda);
  pqn_step(model, theta_b, cloud_b, h, rng, 1);
  REQUIRE(theta_a[0] == Approx(theta_b[0]).epsilon(1e-14));
  REQUIRE(cloud_a.points() == cloud_b.points());
}

TEST_CASE("pqn theta half matches the closed form", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(5, 6);
  ParticleCloud cloud(4, 5);
  cloud.points().setRandom();
  const double mean = cloud.points().mean();

  Vector theta = vec({-0.3});
  CounterRng rng(2);
  pqn_step(model, theta, cloud, 2.0 / 3.0, rng, 1);
  REQUIRE(theta[0] == Approx(-0.3 + (2.0 / 3.0) * (mean + 0.3)).epsilon(1e-12));
}

TEST_CASE("pqn raises on a singular Hessian sum", "[samplers]") {
  struct ZeroHess final : LatentModel {
    Index theta_dim() const override { return 1; }
    Index latent_dim() const override { return 1; }
    std::string name() const override { return "zero-hess"; }
    bool has_theta_hessian() const override { return true; }
   protected:
    double do_log_joint(const Vector& t, const Vector& x) const override {
      return t[0] * x[0];
    }
    Vector do_grad_theta(const Vector&, const Vector& x) const override { return x; }
    Vector do_grad_x(const Vector& t, const Vector&) const override { return t; }
    Matrix do_neg_hess_theta(const Vector&, const Vector&) const override {
      return Matrix::Zero(1, 1);
    }
  } model;

  ParticleCloud cloud(2, 1);
  Vector theta = vec({0.0});
  CounterRng rng(1);
  REQUIRE_THROWS_AS(pqn_step(model, theta, cloud, 0.1, rng, 1), SingularHessianError);
}

TEST_CASE("pmga reports the pre-step m-step and moves the cloud at it", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(2, 8);
  ParticleCloud cloud(2, 2);
  cloud.points() << 1.0, 2.0, 3.0, 4.0;
  CounterRng rng(5);
  const Vector theta = pmga_step(model, cloud, 0.5, rng, 1);
  REQUIRE(theta[0] == Approx(2.5));

  // Same latent update as a plain ULA move at that theta.
  ParticleCloud manual(2, 2);
  manual.points() << 1.0, 2.0, 3.0, 4.0;
  ula_step(model, theta, manual, 0.5, rng, 1);
  REQUIRE(cloud.points() == manual.points());
}

TEST_CASE("soul with one particle reproduces pga exactly", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(4, 10);
  ParticleCloud cloud_soul(1, 4), cloud_pga(1, 4);
  cloud_soul.points().setRandom();
  cloud_pga.points() = cloud_soul.points();

  Vector theta_soul = vec({0.1}), theta_pga = vec({0.1});
  CounterRng rng(31);
  for (long step = 1; step <= 25; ++step) {
    soul_step(model, theta_soul, cloud_soul, 0.05, rng, step);
    pga_step(model, theta_pga, cloud_pga, 0.05, rng, step);
  }
  REQUIRE(theta_soul[0] == theta_pga[0]);
  REQUIRE(cloud_soul.points() == cloud_pga.points());
}

TEST_CASE("soul at frozen theta is a composed ula chain", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(3, 12);
  ParticleCloud cloud(4, 3);
  cloud.points().setRandom();
  const Vector theta = vec({0.6});
  const double h = 0.08;

  // Hand-rolled chain from the last particle, one fresh draw per link.
  CounterRng rng(55);
  Vector state = cloud.particle(3);
  Matrix expected(4, 3);
  for (Index i = 0; i < 4; ++i) {
    Vector w(3);
    rng.fill_normal(StreamKind::latent_noise, 7, static_cast<std::uint64_t>(i), w);
    state = state + h * model.grad_x(theta, state) + std::sqrt(2.0 * h) * w;
    expected.row(i) = state.transpose();
  }

  Vector th = theta;
  soul_step(model, th, cloud, h, rng, 7);
  REQUIRE(cloud.points() == expected);
}

TEST_CASE("run is deterministic given the seed", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(10, 44);
  RunConfig config;
  config.algorithm = Algorithm::pga;
  config.step_size = 0.05;
  config.n_particles = 8;
  config.n_steps = 60;
  config.burn_in = 10;
  config.seed = 2717;

  const Trace a = run(model, config);
  const Trace b = run(model, config);
  REQUIRE(a.theta_path == b.theta_path);
  REQUIRE(a.theta_bar_final == b.theta_bar_final);
  REQUIRE(a.clouds.back().second == b.clouds.back().second);

  config.seed = 2718;
  const Trace c = run(model, config);
  REQUIRE(a.theta_path != c.theta_path);
}

TEST_CASE("exact EM run contracts at exactly one half", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(100, 15);
  const double star = model.theta_star();

  RunConfig config;
  config.algorithm = Algorithm::em_exact;
  config.n_steps = 30;
  config.burn_in = 0;
  const Trace trace = run(model, config);

  double previous = std::abs(0.0 - star);
  for (long k = 0; k < 30; ++k) {
    const double distance = std::abs(trace.theta_path(k, 0) - star);
    REQUIRE(distance == Approx(0.5 * previous).margin(1e-12 * (1.0 + previous)));
    previous = distance;
  }
}

TEST_CASE("single post-burn-in step pins theta_bar", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(5, 16);
  RunConfig config;
  config.algorithm = Algorithm::pqn;
  config.step_size = 0.5;
  config.n_particles = 3;
  config.n_steps = 12;
  config.burn_in = 11;
  config.seed = 99;
  const Trace trace = run(model, config);
  REQUIRE(trace.theta_bar_final[0] == trace.theta_path(11, 0));
}

TEST_CASE("diverging pga run raises with the step index", "[samplers]") {
  const auto model = ToyHierarchicalModel::synthetic(100, 18);
  RunConfig config;
  config.algorithm = Algorithm::pga;
  config.step_size = 0.5;  // far above the stability threshold 2/(1+D_x)
  config.n_particles = 4;
  config.n_steps = 2000;
  config.seed = 1;

  try {
    run(model, config);
    FAIL("expected a divergence error");
  } catch (const DivergenceError& err) {
    REQUIRE(err.step > 0);
    REQUIRE(err.step <= 2000);
  }
}

TEST_CASE("fixed point is preserved in expectation", "[samplers][slow]") {
  // theta at the optimum and particles at exact posterior samples: the theta
  // estimates stay centered on the optimum for PGA, PQN, and PMGA.
  const auto model = ToyHierarchicalModel::synthetic(3, 19);
  const double star = model.theta_star();
  const Vector mean = model.posterior_mean(star);
  const double sd = std::sqrt(ToyHierarchicalModel::posterior_variance());
  const Index n = 6;
  const long steps = 25;
  const int seeds = 120;

  for (Algorithm alg : {Algorithm::pga, Algorithm::pqn, Algorithm::pmga}) {
    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < seeds; ++s) {
      CounterRng init_rng(1000 + s);
      Matrix pts(n, 3);
      for (Index i = 0; i < n; ++i) {
        Vector z(3);
        init_rng.fill_normal(StreamKind::init, 0, static_cast<std::uint64_t>(i), z);
        pts.row(i) = (mean + sd * z).transpose();
      }
      RunConfig config;
      config.algorithm = alg;
      config.step_size = 0.1;
      config.n_particles = n;
      config.n_steps = steps;
      config.burn_in = 0;
      config.seed = static_cast<std::uint64_t>(7000 + s);
      const Trace trace = run_from(model, config, vec({star}), pts);
      const double final_theta = trace.theta_path(steps - 1, 0);
      sum += final_theta - star;
      sum_sq += (final_theta - star) * (final_theta - star);
    }
    const double mean_dev = sum / seeds;
    const double var = sum_sq / seeds - mean_dev * mean_dev;
    const double se = std::sqrt(var / seeds);
    INFO("algorithm " << to_string(alg));
    REQUIRE(std::abs(mean_dev) <= 3.0 * se + 1e-12);
  }
}
