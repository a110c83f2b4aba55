#include <catch2/catch.hpp>

#include <cmath>

#include "pmle/config.hpp"
#include "pmle/model.hpp"
#include "pmle/models/toy_hierarchical.hpp"

using namespace pmle;

namespace {

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("dimension mismatches are contract violations", "[model-core]") {
  ToyHierarchicalModel model(vec({0.0, 0.0}));
  REQUIRE_THROWS_AS(model.log_joint(vec({0.0, 1.0}), vec({0.0, 0.0})), ContractViolation);
  REQUIRE_THROWS_AS(model.log_joint(vec({0.0}), vec({0.0})), ContractViolation);
  REQUIRE_THROWS_AS(model.grad_theta(vec({0.0}), vec({0.0, 0.0, 0.0})), ContractViolation);
  REQUIRE_THROWS_AS(model.grad_x(vec({0.0, 1.0}), vec({0.0, 0.0})), ContractViolation);
}

TEST_CASE("missing capabilities surface as typed errors at configuration", "[model-core]") {
  // A minimal model with none of the optional capabilities.
  struct Bare final : LatentModel {
    Index theta_dim() const override { return 1; }
    Index latent_dim() const override { return 1; }
    std::string name() const override { return "bare"; }
   protected:
    double do_log_joint(const Vector& t, const Vector& x) const override {
      return -0.5 * (x[0] - t[0]) * (x[0] - t[0]);
    }
    Vector do_grad_theta(const Vector& t, const Vector& x) const override {
      return vec({x[0] - t[0]});
    }
    Vector do_grad_x(const Vector& t, const Vector& x) const override {
      return vec({t[0] - x[0]});
    }
  } bare;

  REQUIRE_THROWS_AS(bare.neg_hess_theta(vec({0.0}), vec({0.0})), UnsupportedCapability);
  REQUIRE_THROWS_AS(bare.exact_m_step(ParticleCloud(1, 1)), UnsupportedCapability);
  REQUIRE_THROWS_AS(bare.exact_em_step(vec({0.0})), UnsupportedCapability);

  RunConfig config;
  config.algorithm = Algorithm::pqn;
  REQUIRE_THROWS_AS(config.validate(bare), UnsupportedCapability);
  config.algorithm = Algorithm::pmga;
  REQUIRE_THROWS_AS(config.validate(bare), UnsupportedCapability);
  config.algorithm = Algorithm::mh_marginal;
  REQUIRE_THROWS_AS(config.validate(bare), UnsupportedCapability);
  config.algorithm = Algorithm::em_exact;
  REQUIRE_THROWS_AS(config.validate(bare), UnsupportedCapability);
  config.algorithm = Algorithm::pga;
  REQUIRE_NOTHROW(config.validate(bare));
}

TEST_CASE("run config invariants", "[model-core]") {
  ToyHierarchicalModel model(vec({1.0, 2.0}));
  RunConfig config;
  config.algorithm = Algorithm::pga;

  config.step_size = 0.0;
  REQUIRE_THROWS_AS(config.validate(model), ConfigError);
  config.step_size = 0.1;

  config.burn_in = 100;
  config.n_steps = 100;
  REQUIRE_THROWS_AS(config.validate(model), ConfigError);
  config.burn_in = 0;

  config.n_particles = 0;
  REQUIRE_THROWS_AS(config.validate(model), ConfigError);
  config.n_particles = 1;

  config.theta_scaling = vec({-1.0});
  REQUIRE_THROWS_AS(config.validate(model), ConfigError);
  config.theta_scaling = vec({1.0});
  config.algorithm = Algorithm::pqn;
  REQUIRE_THROWS_AS(config.validate(model), ConfigError);
  config.algorithm = Algorithm::soul;
  REQUIRE_NOTHROW(config.validate(model));
}

TEST_CASE("parameter state keeps a streaming post-burn-in mean", "[model-core]") {
  ParameterState state(vec({0.0}), 2);
  state.record(vec({10.0}));  // step 1, burned
  state.record(vec({20.0}));  // step 2, burned
  REQUIRE_FALSE(state.has_average());
  REQUIRE(state.theta_bar()[0] == 20.0);  // falls back to the current theta

  state.record(vec({1.0}));
  state.record(vec({2.0}));
  state.record(vec({6.0}));
  REQUIRE(state.averaged_count() == 3);
  REQUIRE(state.theta_bar()[0] == Approx(3.0).epsilon(1e-15));
}

TEST_CASE("single post-burn-in step means theta_bar equals it", "[model-core]") {
  ParameterState state(vec({0.0}), 3);
  for (int k = 0; k < 3; ++k) state.record(vec({static_cast<double>(k)}));
  state.record(vec({7.5}));
  REQUIRE(state.theta_bar()[0] == 7.5);
}

TEST_CASE("preconditioner requires strictly positive entries", "[model-core]") {
  REQUIRE_THROWS_AS(Preconditioner(vec({1.0, 0.0})), ContractViolation);
  REQUIRE_THROWS_AS(Preconditioner(vec({-2.0})), ContractViolation);
  Preconditioner p(vec({2.0, 0.5}));
  const Vector scaled = p.apply(vec({3.0, 8.0}));
  REQUIRE(scaled[0] == 6.0);
  REQUIRE(scaled[1] == 4.0);
}

TEST_CASE("particle cloud shape is validated", "[model-core]") {
  REQUIRE_THROWS_AS(ParticleCloud(0, 3), ContractViolation);
  REQUIRE_THROWS_AS(ParticleCloud(3, 0), ContractViolation);
  ParticleCloud cloud(2, 3);
  REQUIRE(cloud.count() == 2);
  REQUIRE(cloud.dim() == 3);
  REQUIRE(cloud.all_finite());
  cloud.points()(1, 2) = std::numeric_limits<double>::infinity();
  REQUIRE_FALSE(cloud.all_finite());
}
