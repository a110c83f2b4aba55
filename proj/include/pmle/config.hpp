#ifndef PMLE_CONFIG_HPP
#define PMLE_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pmle/errors.hpp"
#include "pmle/model.hpp"

namespace pmle {

enum class Algorithm {
  pga,
  pga_scaled,
  pqn,
  pmga,
  soul,
  mh_marginal,
  mh_joint,
  em_exact,
};

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::pga: return "PGA";
    case Algorithm::pga_scaled: return "PGA-scaled";
    case Algorithm::pqn: return "PQN";
    case Algorithm::pmga: return "PMGA";
    case Algorithm::soul: return "SOUL";
    case Algorithm::mh_marginal: return "MH-marginal";
    case Algorithm::mh_joint: return "MH-joint";
    case Algorithm::em_exact: return "EM-exact";
  }
  return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "PGA" || s == "pga") return Algorithm::pga;
  if (s == "PGA-scaled" || s == "pga-scaled") return Algorithm::pga_scaled;
  if (s == "PQN" || s == "pqn") return Algorithm::pqn;
  if (s == "PMGA" || s == "pmga") return Algorithm::pmga;
  if (s == "SOUL" || s == "soul") return Algorithm::soul;
  if (s == "MH-marginal" || s == "mh-marginal") return Algorithm::mh_marginal;
  if (s == "MH-joint" || s == "mh-joint") return Algorithm::mh_joint;
  if (s == "EM-exact" || s == "em-exact") return Algorithm::em_exact;
  throw ConfigError("unknown algorithm: " + s);
}

// Theta update rule used inside the joint MH proposal.
enum class MhThetaRule { pga, pqn };

struct InitPolicy {
  enum class Kind { zeros, constant, prior, warm_start };
  Kind kind = Kind::zeros;
  double value = 0.0;      // for `constant`
  std::string path;        // for `warm_start`

  static InitPolicy zeros() { return {}; }
  static InitPolicy constant(double c) { return {Kind::constant, c, {}}; }
  static InitPolicy prior() { return {Kind::prior, 0.0, {}}; }
  static InitPolicy warm_start(std::string file) { return {Kind::warm_start, 0.0, std::move(file)}; }
};

struct RunConfig {
  Algorithm algorithm = Algorithm::pga;
  double step_size = 0.1;          // h
  Index n_particles = 1;           // N
  long n_steps = 100;              // K
  long burn_in = 0;                // k_b
  std::uint64_t seed = 0;
  long snapshot_every = 0;         // 0 = record the final cloud only
  InitPolicy init;
  // Diagonal theta scaling; applies to PGA and SOUL theta halves. Empty means
  // identity for `pga`/`soul` and the model default for `pga_scaled`.
  std::optional<Vector> theta_scaling;
  MhThetaRule mh_theta_rule = MhThetaRule::pga;

  // Raises ConfigError / UnsupportedCapability before any computation starts.
  void validate(const LatentModel& model) const {
    if (!(step_size > 0.0)) throw ConfigError("step size h must be positive");
    if (n_particles < 1) throw ConfigError("n_particles must be at least 1");
    if (n_steps < 1) throw ConfigError("n_steps must be at least 1");
    if (burn_in < 0 || burn_in >= n_steps)
      throw ConfigError("burn_in must satisfy 0 <= burn_in < n_steps");
    if (snapshot_every < 0) throw ConfigError("snapshot_every must be non-negative");
    if (theta_scaling) {
      if (theta_scaling->size() != model.theta_dim())
        throw ConfigError("theta_scaling size does not match the model's theta dimension");
      if ((theta_scaling->array() <= 0.0).any())
        throw ConfigError("theta_scaling entries must be strictly positive");
      if (algorithm != Algorithm::pga && algorithm != Algorithm::pga_scaled &&
          algorithm != Algorithm::soul)
        throw ConfigError("theta_scaling only applies to PGA and SOUL runs");
    }
    switch (algorithm) {
      case Algorithm::pqn:
        if (!model.has_theta_hessian())
          throw UnsupportedCapability("PQN requires neg_hess_theta, which " + model.name() +
                                      " does not provide");
        break;
      case Algorithm::pmga:
      case Algorithm::mh_marginal:
        if (!model.has_exact_m_step())
          throw UnsupportedCapability(to_string(algorithm) + std::string(" requires an exact M-step, which ") +
                                      model.name() + " does not provide");
        break;
      case Algorithm::mh_joint:
        if (mh_theta_rule == MhThetaRule::pqn && !model.has_theta_hessian())
          throw UnsupportedCapability("MH-joint with the PQN rule requires neg_hess_theta");
        break;
      case Algorithm::em_exact:
        if (!model.has_exact_em())
          throw UnsupportedCapability("EM-exact requires an exact EM step, which " +
                                      model.name() + " does not provide");
        break;
      default:
        break;
    }
  }

  // The diagonal scaling actually used by the run, if any.
  std::optional<Vector> resolved_scaling(const LatentModel& model) const {
    if (theta_scaling) return theta_scaling;
    if (algorithm == Algorithm::pga_scaled) return model.default_theta_scaling();
    return std::nullopt;
  }
};

// Per-run record: the theta estimate after every step, the final post-burn-in
// average, optional cloud snapshots, and bookkeeping.
struct Trace {
  Matrix theta_path;                               // K x D_theta; row k-1 = estimate after step k
  Vector theta_bar_final;
  std::vector<std::pair<long, Matrix>> clouds;     // (step, N x D_x)
  std::optional<double> acceptance_rate;           // MH runs only
  double wall_time_s = 0.0;
};

}  // namespace pmle

#endif  // PMLE_CONFIG_HPP
