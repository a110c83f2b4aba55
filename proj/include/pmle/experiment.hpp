#ifndef PMLE_EXPERIMENT_HPP
#define PMLE_EXPERIMENT_HPP

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pmle/config.hpp"
#include "pmle/data.hpp"
#include "pmle/errors.hpp"
#include "pmle/io.hpp"
#include "pmle/metrics.hpp"
#include "pmle/metropolis.hpp"
#include "pmle/model.hpp"
#include "pmle/models/bnn.hpp"
#include "pmle/models/logistic_regression.hpp"
#include "pmle/models/toy_hierarchical.hpp"
#include "pmle/oracles.hpp"
#include "pmle/samplers.hpp"
#include "pmle/version.hpp"

namespace pmle {

using nlohmann::json;

// Exit codes of the experiment runner.
enum ExitCode : int {
  exit_ok = 0,
  exit_config_error = 1,
  exit_data_error = 2,
  exit_divergence = 3,
};

struct EmitFlags {
  bool theta_trace = true;
  bool metrics = true;
  bool cloud_samples = false;
  bool meanfield = false;
  bool spectral = false;
  bool state = false;
};

struct ModelConfig {
  std::string name;                   // toy | logistic | bnn
  // toy
  Index d_x = 100;
  std::uint64_t data_seed = 0;
  double theta_true = 1.0;
  std::optional<std::vector<double>> explicit_y;
  // logistic / bnn
  std::string dataset;                // wbc | mnist | synthetic
  std::string path;                   // wbc csv
  std::string images, labels_path;    // mnist idx pair
  std::vector<int> classes = {4, 9};
  Index count = 1000;
  Index hidden = 40;
  Index synthetic_dim = 9;
  std::uint64_t subsample_seed = 0;
  std::uint64_t split_seed = 0;
};

struct ExperimentConfig {
  ModelConfig model;
  RunConfig run;
  bool scaling_model_default = false;
  int replicates = 1;
  std::string output_dir = "out";
  EmitFlags emit;
};

struct BuiltModel {
  std::unique_ptr<LatentModel> model;
  std::optional<Dataset> data;
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                                const std::string& where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto& key : allowed)
      if (item.key() == key) known = true;
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

inline ModelConfig parse_model_config(const json& j) {
  if (!j.is_object()) throw ConfigError("'model' must be an object");
  reject_unknown_keys(j, {"name", "d_x", "data_seed", "theta_true", "y", "dataset", "path",
                          "images", "labels", "classes", "count", "hidden", "synthetic_dim",
                          "subsample_seed", "split_seed"},
                      "model");
  ModelConfig m;
  if (!j.contains("name")) throw ConfigError("model.name is required");
  m.name = j.at("name").get<std::string>();
  if (m.name != "toy" && m.name != "logistic" && m.name != "bnn")
    throw ConfigError("model.name must be toy, logistic, or bnn");
  if (j.contains("d_x")) m.d_x = j.at("d_x").get<Index>();
  if (j.contains("data_seed")) m.data_seed = j.at("data_seed").get<std::uint64_t>();
  if (j.contains("theta_true")) m.theta_true = j.at("theta_true").get<double>();
  if (j.contains("y")) m.explicit_y = j.at("y").get<std::vector<double>>();
  if (j.contains("dataset")) m.dataset = j.at("dataset").get<std::string>();
  if (j.contains("path")) m.path = j.at("path").get<std::string>();
  if (j.contains("images")) m.images = j.at("images").get<std::string>();
  if (j.contains("labels")) m.labels_path = j.at("labels").get<std::string>();
  if (j.contains("classes")) {
    m.classes = j.at("classes").get<std::vector<int>>();
    if (m.classes.size() != 2) throw ConfigError("model.classes must name exactly two classes");
  }
  if (j.contains("count")) m.count = j.at("count").get<Index>();
  if (j.contains("hidden")) m.hidden = j.at("hidden").get<Index>();
  if (j.contains("synthetic_dim")) m.synthetic_dim = j.at("synthetic_dim").get<Index>();
  if (j.contains("subsample_seed")) m.subsample_seed = j.at("subsample_seed").get<std::uint64_t>();
  if (j.contains("split_seed")) m.split_seed = j.at("split_seed").get<std::uint64_t>();

  if (m.name == "logistic" && m.dataset.empty()) m.dataset = "wbc";
  if (m.name == "bnn" && m.dataset.empty()) m.dataset = "mnist";
  return m;
}

inline InitPolicy parse_init(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "zeros") return InitPolicy::zeros();
    if (s == "prior") return InitPolicy::prior();
    throw ConfigError("init must be 'zeros', 'prior', {\"constant\": c}, or {\"warm_start\": path}");
  }
  if (j.is_object()) {
    reject_unknown_keys(j, {"constant", "warm_start"}, "run.init");
    if (j.contains("constant")) return InitPolicy::constant(j.at("constant").get<double>());
    if (j.contains("warm_start"))
      return InitPolicy::warm_start(j.at("warm_start").get<std::string>());
  }
  throw ConfigError("unrecognized init policy");
}

inline void parse_run_config(const json& j, ExperimentConfig& cfg) {
  if (!j.is_object()) throw ConfigError("'run' must be an object");
  reject_unknown_keys(j, {"algorithm", "h", "n_particles", "n_steps", "burn_in", "seed",
                          "snapshot_every", "init", "theta_scaling", "mh_theta_rule"},
                      "run");
  RunConfig& r = cfg.run;
  if (!j.contains("algorithm")) throw ConfigError("run.algorithm is required");
  r.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  if (j.contains("h")) {
    r.step_size = j.at("h").get<double>();
    if (!(r.step_size > 0.0)) throw ConfigError("run.h must be positive");
  }
  if (j.contains("n_particles")) r.n_particles = j.at("n_particles").get<Index>();
  if (j.contains("n_steps")) r.n_steps = j.at("n_steps").get<long>();
  if (j.contains("burn_in")) r.burn_in = j.at("burn_in").get<long>();
  if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("snapshot_every")) r.snapshot_every = j.at("snapshot_every").get<long>();
  if (j.contains("init")) r.init = parse_init(j.at("init"));
  if (j.contains("theta_scaling")) {
    const auto& ts = j.at("theta_scaling");
    if (ts.is_string()) {
      if (ts.get<std::string>() != "model-default")
        throw ConfigError("run.theta_scaling must be 'model-default' or an array");
      cfg.scaling_model_default = true;
    } else {
      const auto values = ts.get<std::vector<double>>();
      Vector v(static_cast<Index>(values.size()));
      for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Index>(i)] = values[i];
      r.theta_scaling = v;
    }
  }
  if (j.contains("mh_theta_rule")) {
    const auto rule = j.at("mh_theta_rule").get<std::string>();
    if (rule == "pga") r.mh_theta_rule = MhThetaRule::pga;
    else if (rule == "pqn") r.mh_theta_rule = MhThetaRule::pqn;
    else throw ConfigError("run.mh_theta_rule must be 'pga' or 'pqn'");
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  detail::reject_unknown_keys(j, {"model", "run", "replicates", "output_dir", "emit"}, "config");
  ExperimentConfig cfg;
  if (!j.contains("model")) throw ConfigError("config requires a 'model' block");
  if (!j.contains("run")) throw ConfigError("config requires a 'run' block");
  cfg.model = detail::parse_model_config(j.at("model"));
  detail::parse_run_config(j.at("run"), cfg);
  if (j.contains("replicates")) {
    cfg.replicates = j.at("replicates").get<int>();
    if (cfg.replicates < 1) throw ConfigError("replicates must be at least 1");
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("emit")) {
    const auto& e = j.at("emit");
    detail::reject_unknown_keys(
        e, {"theta_trace", "metrics", "cloud_samples", "meanfield", "spectral", "state"}, "emit");
    if (e.contains("theta_trace")) cfg.emit.theta_trace = e.at("theta_trace").get<bool>();
    if (e.contains("metrics")) cfg.emit.metrics = e.at("metrics").get<bool>();
    if (e.contains("cloud_samples")) cfg.emit.cloud_samples = e.at("cloud_samples").get<bool>();
    if (e.contains("meanfield")) cfg.emit.meanfield = e.at("meanfield").get<bool>();
    if (e.contains("spectral")) cfg.emit.spectral = e.at("spectral").get<bool>();
    if (e.contains("state")) cfg.emit.state = e.at("state").get<bool>();
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config parse error: ") + err.what());
  }
  return parse_experiment_config(j);
}

// Resolves a dataset path against the data directory (PMLE_DATA_DIR or an
// explicit override).
inline std::filesystem::path resolve_data_path(const std::string& path,
                                               const std::string& data_dir) {
  std::filesystem::path p(path);
  if (p.is_absolute() || data_dir.empty()) return p;
  return std::filesystem::path(data_dir) / p;
}

inline BuiltModel build_model(const ModelConfig& m, const std::string& data_dir) {
  BuiltModel built;
  if (m.name == "toy") {
    if (m.explicit_y) {
      Vector y(static_cast<Index>(m.explicit_y->size()));
      for (std::size_t i = 0; i < m.explicit_y->size(); ++i)
        y[static_cast<Index>(i)] = (*m.explicit_y)[i];
      built.model = std::make_unique<ToyHierarchicalModel>(y);
    } else {
      built.model = std::make_unique<ToyHierarchicalModel>(
          ToyHierarchicalModel::synthetic(m.d_x, m.data_seed, m.theta_true));
    }
    return built;
  }

  if (m.name == "logistic") {
    Dataset data;
    if (m.dataset == "synthetic") {
      data = synthetic_logistic(m.count, m.synthetic_dim, m.data_seed, m.split_seed);
    } else if (m.dataset == "wbc") {
      const auto path = resolve_data_path(m.path.empty() ? "breast-cancer-wisconsin.data" : m.path,
                                          data_dir);
      data = load_wbc(path.string(), m.split_seed);
    } else {
      throw ConfigError("logistic model: dataset must be 'wbc' or 'synthetic'");
    }
    built.model = std::make_unique<LogisticRegressionModel>(data.train_features(),
                                                            data.train_labels());
    built.data = std::move(data);
    return built;
  }

  // bnn
  Dataset data;
  if (m.dataset == "synthetic") {
    data = synthetic_bnn(m.count, m.synthetic_dim, m.data_seed, m.split_seed);
  } else if (m.dataset == "mnist") {
    const auto images = resolve_data_path(m.images.empty() ? "train-images-idx3-ubyte" : m.images,
                                          data_dir);
    const auto labels = resolve_data_path(
        m.labels_path.empty() ? "train-labels-idx1-ubyte" : m.labels_path, data_dir);
    data = load_mnist_subset(images.string(), labels.string(), m.classes[0], m.classes[1],
                             m.count, m.subsample_seed, m.split_seed);
  } else {
    throw ConfigError("bnn model: dataset must be 'mnist' or 'synthetic'");
  }
  built.model = std::make_unique<BnnModel>(data.train_features(), data.train_labels(), m.hidden);
  built.data = std::move(data);
  return built;
}

// ---------------------------------------------------------------------------
// Spectral CSV.
// ---------------------------------------------------------------------------

inline std::string spectral_csv(Index d_x, double h_min, double h_max, Index steps) {
  if (steps < 1) throw ConfigError("spectral: need at least one grid point");
  if (!(h_min > 0.0) || h_max < h_min) throw ConfigError("spectral: bad h range");
  std::ostringstream out;
  out << "d_x,h,rho_pga,rho_pqn,rho_pmga,h_opt_pga,h_opt_pqn,h_opt_pmga,"
         "rho_opt_pga,rho_opt_pqn,rho_opt_pmga\n";
  for (Index i = 0; i < steps; ++i) {
    const double h = steps == 1 ? h_min
                                : h_min + (h_max - h_min) * static_cast<double>(i) /
                                      static_cast<double>(steps - 1);
    const auto r = oracles::spectral_report(d_x, h);
    out << d_x << "," << io::format_double(h) << "," << io::format_double(r.rho_g) << ","
        << io::format_double(r.rho_n) << "," << io::format_double(r.rho_m) << ","
        << io::format_double(r.h_opt_g) << "," << io::format_double(r.h_opt_n) << ","
        << io::format_double(r.h_opt_m) << "," << io::format_double(r.rho_at_opt_g) << ","
        << io::format_double(r.rho_at_opt_n) << "," << io::format_double(r.rho_at_opt_m) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Experiment runner.
// ---------------------------------------------------------------------------

namespace detail {

inline json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Vector stationary_theta_variance(const Trace& trace, long burn_in) {
  const Index dt = trace.theta_path.cols();
  const Index rows = trace.theta_path.rows();
  const Index tail = rows - static_cast<Index>(burn_in);
  if (tail < 2) return Vector::Constant(dt, std::numeric_limits<double>::quiet_NaN());
  Vector mean = Vector::Zero(dt), ss = Vector::Zero(dt);
  for (Index k = burn_in; k < rows; ++k) mean += trace.theta_path.row(k).transpose();
  mean /= static_cast<double>(tail);
  for (Index k = burn_in; k < rows; ++k)
    ss += (trace.theta_path.row(k).transpose() - mean).array().square().matrix();
  return ss / static_cast<double>(tail - 1);
}

// Particle pools used for prediction and variance estimates: every recorded
// cloud past the burn-in (the final cloud alone when snapshots are off).
inline std::vector<Matrix> posterior_pools(const Trace& trace, long burn_in) {
  std::vector<Matrix> pools;
  for (const auto& [step, cloud] : trace.clouds)
    if (step > burn_in) pools.push_back(cloud);
  if (pools.empty() && !trace.clouds.empty()) pools.push_back(trace.clouds.back().second);
  return pools;
}

inline json run_replicate_metrics(const LatentModel& model, const std::optional<Dataset>& data,
                                  const RunConfig& config, const Trace& trace) {
  json metrics;
  metrics["seed"] = config.seed;
  metrics["wall_time_s"] = trace.wall_time_s;
  metrics["theta_final"] = vector_to_json(trace.theta_path.row(trace.theta_path.rows() - 1));
  metrics["theta_bar"] = vector_to_json(trace.theta_bar_final);
  const Vector theta_var = stationary_theta_variance(trace, config.burn_in);
  metrics["theta_stationary_variance"] = vector_to_json(theta_var);
  if (theta_var.allFinite()) metrics["theta_stationary_variance_mean"] = theta_var.mean();
  if (trace.acceptance_rate) metrics["acceptance_rate"] = *trace.acceptance_rate;

  const auto pools = posterior_pools(trace, config.burn_in);
  if (!pools.empty()) {
    Index total = 0;
    for (const auto& pool : pools) total += pool.rows();
    if (total >= 2) {
      const Vector variance = posterior_variance_estimate(pools);
      metrics["posterior_variance_mean"] = variance.mean();
      if (variance.size() <= 32) metrics["posterior_variance"] = vector_to_json(variance);
    }
  }

  if (model.has_predictor() && data && !data->test_indices.empty() && !pools.empty()) {
    const CloudClassifier classifier(model, pools);
    metrics["test_error"] = test_error(classifier, data->test_features(), data->test_labels());
    metrics["lppd"] = lppd(classifier, data->test_features(), data->test_labels());
  }
  return metrics;
}

inline json aggregate_metrics(const std::vector<json>& replicates) {
  json agg;
  for (const char* key : {"test_error", "lppd", "posterior_variance_mean",
                          "theta_stationary_variance_mean", "acceptance_rate", "wall_time_s"}) {
    std::vector<double> values;
    for (const auto& rep : replicates)
      if (rep.contains(key)) values.push_back(rep.at(key).get<double>());
    if (values.empty()) continue;
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1
                          ? std::sqrt(ss / static_cast<double>(values.size() - 1))
                          : 0.0;
    agg[key] = {{"mean", mean}, {"std", sd}, {"count", values.size()}};
  }
  return agg;
}

inline json resolved_config_json(const ExperimentConfig& cfg, const std::string& data_dir) {
  json j;
  j["model"]["name"] = cfg.model.name;
  if (cfg.model.name == "toy") {
    j["model"]["d_x"] = cfg.model.d_x;
    j["model"]["data_seed"] = cfg.model.data_seed;
    j["model"]["theta_true"] = cfg.model.theta_true;
    if (cfg.model.explicit_y) j["model"]["y"] = *cfg.model.explicit_y;
  } else {
    j["model"]["dataset"] = cfg.model.dataset;
    j["model"]["split_seed"] = cfg.model.split_seed;
    if (cfg.model.name == "logistic") {
      if (cfg.model.dataset == "wbc")
        j["model"]["path"] =
            resolve_data_path(cfg.model.path.empty() ? "breast-cancer-wisconsin.data"
                                                     : cfg.model.path,
                              data_dir)
                .string();
      else {
        j["model"]["count"] = cfg.model.count;
        j["model"]["synthetic_dim"] = cfg.model.synthetic_dim;
        j["model"]["data_seed"] = cfg.model.data_seed;
      }
    } else {
      j["model"]["hidden"] = cfg.model.hidden;
      j["model"]["count"] = cfg.model.count;
      if (cfg.model.dataset == "mnist") {
        j["model"]["images"] =
            resolve_data_path(cfg.model.images.empty() ? "train-images-idx3-ubyte"
                                                       : cfg.model.images,
                              data_dir)
                .string();
        j["model"]["labels"] =
            resolve_data_path(cfg.model.labels_path.empty() ? "train-labels-idx1-ubyte"
                                                            : cfg.model.labels_path,
                              data_dir)
                .string();
        j["model"]["classes"] = cfg.model.classes;
        j["model"]["subsample_seed"] = cfg.model.subsample_seed;
      } else {
        j["model"]["synthetic_dim"] = cfg.model.synthetic_dim;
        j["model"]["data_seed"] = cfg.model.data_seed;
      }
    }
  }
  j["run"]["algorithm"] = to_string(cfg.run.algorithm);
  j["run"]["h"] = cfg.run.step_size;
  j["run"]["n_particles"] = cfg.run.n_particles;
  j["run"]["n_steps"] = cfg.run.n_steps;
  j["run"]["burn_in"] = cfg.run.burn_in;
  j["run"]["seed"] = cfg.run.seed;
  j["run"]["snapshot_every"] = cfg.run.snapshot_every;
  switch (cfg.run.init.kind) {
    case InitPolicy::Kind::zeros: j["run"]["init"] = "zeros"; break;
    case InitPolicy::Kind::prior: j["run"]["init"] = "prior"; break;
    case InitPolicy::Kind::constant: j["run"]["init"] = {{"constant", cfg.run.init.value}}; break;
    case InitPolicy::Kind::warm_start:
      j["run"]["init"] = {{"warm_start", cfg.run.init.path}};
      break;
  }
  if (cfg.run.theta_scaling) {
    json arr = json::array();
    for (Index i = 0; i < cfg.run.theta_scaling->size(); ++i)
      arr.push_back((*cfg.run.theta_scaling)[i]);
    j["run"]["theta_scaling"] = arr;
  } else if (cfg.scaling_model_default) {
    j["run"]["theta_scaling"] = "model-default";
  }
  if (cfg.run.algorithm == Algorithm::mh_joint)
    j["run"]["mh_theta_rule"] = cfg.run.mh_theta_rule == MhThetaRule::pga ? "pga" : "pqn";
  j["replicates"] = cfg.replicates;
  j["output_dir"] = cfg.output_dir;
  j["emit"] = {{"theta_trace", cfg.emit.theta_trace}, {"metrics", cfg.emit.metrics},
               {"cloud_samples", cfg.emit.cloud_samples}, {"meanfield", cfg.emit.meanfield},
               {"spectral", cfg.emit.spectral}, {"state", cfg.emit.state}};
  return j;
}

inline std::pair<Vector, Matrix> load_warm_start(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open warm-start file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& err) {
    throw ConfigError(std::string("warm-start parse error: ") + err.what());
  }
  if (!j.contains("theta") || !j.contains("cloud"))
    throw ConfigError("warm-start file needs 'theta' and 'cloud'");
  const auto theta_values = j.at("theta").get<std::vector<double>>();
  Vector theta(static_cast<Index>(theta_values.size()));
  for (std::size_t i = 0; i < theta_values.size(); ++i)
    theta[static_cast<Index>(i)] = theta_values[i];
  const auto rows = j.at("cloud").get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw ConfigError("warm-start cloud is empty");
  Matrix cloud(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ConfigError("warm-start cloud is ragged");
    for (std::size_t k = 0; k < rows[i].size(); ++k)
      cloud(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  }
  return {std::move(theta), std::move(cloud)};
}

inline std::string state_json(const Trace& trace) {
  json j;
  j["theta"] = vector_to_json(trace.theta_path.row(trace.theta_path.rows() - 1));
  j["theta_bar"] = vector_to_json(trace.theta_bar_final);
  json cloud = json::array();
  if (!trace.clouds.empty()) {
    const Matrix& final_cloud = trace.clouds.back().second;
    for (Index i = 0; i < final_cloud.rows(); ++i) {
      json row = json::array();
      for (Index k = 0; k < final_cloud.cols(); ++k) row.push_back(final_cloud(i, k));
      cloud.push_back(row);
    }
  }
  j["cloud"] = cloud;
  return j.dump(2) + "\n";
}

}  // namespace detail

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::string data_dir;  // empty means PMLE_DATA_DIR, then cwd
};

// Runs the configured experiment and writes every enabled artifact. Errors
// map onto the documented exit codes; diagnostics go to `err`.
inline int run_experiment(const ExperimentConfig& config_in, const RunOverrides& overrides,
                          std::ostream& err = std::cerr) {
  ExperimentConfig cfg = config_in;
  if (overrides.seed) cfg.run.seed = *overrides.seed;
  std::string data_dir = overrides.data_dir;
  if (data_dir.empty()) {
    if (const char* env = std::getenv("PMLE_DATA_DIR")) data_dir = env;
  }

  BuiltModel built;
  try {
    built = build_model(cfg.model, data_dir);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return exit_data_error;
  }

  std::optional<std::pair<Vector, Matrix>> warm;
  try {
    cfg.run.validate(*built.model);
    if (cfg.scaling_model_default && !cfg.run.theta_scaling)
      cfg.run.theta_scaling = built.model->default_theta_scaling();
    if (cfg.run.init.kind == InitPolicy::Kind::warm_start)
      warm = detail::load_warm_start(cfg.run.init.path);
    if (cfg.emit.meanfield) {
      if (cfg.model.name != "toy")
        throw ConfigError("meanfield emission is only defined for the toy model");
      if (cfg.run.algorithm != Algorithm::pga && cfg.run.algorithm != Algorithm::pga_scaled &&
          cfg.run.algorithm != Algorithm::pqn && cfg.run.algorithm != Algorithm::pmga)
        throw ConfigError("meanfield emission requires PGA, PGA-scaled, PQN, or PMGA");
    }
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  }

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) {
    err << "data error: cannot create output directory " << cfg.output_dir << "\n";
    return exit_data_error;
  }
  const std::filesystem::path out_dir(cfg.output_dir);

  std::vector<json> replicate_metrics;
  try {
    for (int rep = 0; rep < cfg.replicates; ++rep) {
      RunConfig run_cfg = cfg.run;
      run_cfg.seed = cfg.run.seed + static_cast<std::uint64_t>(rep);

      Trace trace;
      if (warm) {
        trace = run_from(*built.model, run_cfg, warm->first, warm->second);
      } else {
        trace = run(*built.model, run_cfg);
      }

      const std::string suffix = rep == 0 ? "" : "_rep" + std::to_string(rep);
      if (cfg.emit.theta_trace)
        io::write_file_atomic(out_dir / ("theta_trace" + suffix + ".csv"),
                              io::theta_trace_csv(trace, run_cfg.burn_in));
      if (cfg.emit.cloud_samples && !trace.clouds.empty())
        io::write_file_atomic(out_dir / ("cloud_final" + suffix + ".csv"),
                              io::cloud_csv(trace.clouds.back().second));
      if (cfg.emit.state)
        io::write_file_atomic(out_dir / ("state_final" + suffix + ".json"),
                              detail::state_json(trace));
      if (cfg.emit.metrics)
        replicate_metrics.push_back(
            detail::run_replicate_metrics(*built.model, built.data, run_cfg, trace));
    }
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return exit_divergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_config_error;
  }

  if (cfg.emit.metrics) {
    json metrics;
    metrics["replicates"] = replicate_metrics;
    metrics["aggregate"] = detail::aggregate_metrics(replicate_metrics);
    io::write_file_atomic(out_dir / "metrics.json", metrics.dump(2) + "\n");
  }

  if (cfg.emit.meanfield) {
    const auto* toy = dynamic_cast<const ToyHierarchicalModel*>(built.model.get());
    oracles::MeanFieldVariant variant = oracles::MeanFieldVariant::pga;
    double lambda = 1.0;
    if (cfg.run.algorithm == Algorithm::pqn) variant = oracles::MeanFieldVariant::pqn;
    if (cfg.run.algorithm == Algorithm::pmga) variant = oracles::MeanFieldVariant::pmga;
    if (cfg.run.algorithm == Algorithm::pga_scaled)
      lambda = 1.0 / static_cast<double>(toy->latent_dim());
    double init0 = cfg.run.init.kind == InitPolicy::Kind::constant ? cfg.run.init.value : 0.0;
    const auto path = oracles::meanfield_recursion(
        variant, toy->latent_dim(), cfg.run.step_size, toy->observations().mean(),
        {init0, init0}, cfg.run.n_steps, lambda);
    std::ostringstream out;
    out << "step,theta,nu\n";
    for (std::size_t k = 0; k < path.size(); ++k)
      out << k << "," << io::format_double(path[k].theta) << ","
          << io::format_double(path[k].nu) << "\n";
    io::write_file_atomic(out_dir / "meanfield.csv", out.str());
  }

  if (cfg.emit.spectral) {
    const Index dx = built.model->latent_dim();
    io::write_file_atomic(out_dir / "spectral.csv", spectral_csv(dx, 0.001, 1.5, 500));
  }

  json manifest;
  manifest["config"] = detail::resolved_config_json(cfg, data_dir);
  manifest["library_version"] = version_string;
  json seeds = json::array();
  for (int rep = 0; rep < cfg.replicates; ++rep)
    seeds.push_back(cfg.run.seed + static_cast<std::uint64_t>(rep));
  manifest["replicate_seeds"] = seeds;
  io::write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");

  return exit_ok;
}

inline int run_experiment_file(const std::filesystem::path& config_path,
                               const RunOverrides& overrides, std::ostream& err = std::cerr) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  }
  return run_experiment(cfg, overrides, err);
}

// ---------------------------------------------------------------------------
// Verification suites (the `verify` CLI verb).
// ---------------------------------------------------------------------------

inline int verify_gradients(std::ostream& out) {
  bool ok = true;
  {
    const auto toy = ToyHierarchicalModel::synthetic(5, 101);
    const auto report = oracles::finite_difference_check(toy, 20, 7);
    out << "toy          worst grad_theta " << report.worst_grad_theta << ", grad_x "
        << report.worst_grad_x << ", hess " << report.worst_hess_theta << " (tol 1e-9)\n";
    ok = ok && report.worst() < 1e-9;
  }
  {
    const Dataset data = synthetic_logistic(60, 9, 5, 6);
    const LogisticRegressionModel model(data.train_features(), data.train_labels());
    const auto report = oracles::finite_difference_check(model, 20, 11);
    out << "logistic     worst grad_theta " << report.worst_grad_theta << ", grad_x "
        << report.worst_grad_x << ", hess " << report.worst_hess_theta << " (tol 1e-5)\n";
    ok = ok && report.worst() < 1e-5;
  }
  {
    const Dataset data = synthetic_bnn(40, 12, 9, 10);
    const BnnModel model(data.train_features(), data.train_labels(), 4);
    oracles::FiniteDiffOptions opts;
    opts.coord_subsample = 20;
    const auto report = oracles::finite_difference_check(model, 20, 13, opts);
    out << "bnn          worst grad_theta " << report.worst_grad_theta << ", grad_x "
        << report.worst_grad_x << ", hess " << report.worst_hess_theta << " (tol 1e-4)\n";
    ok = ok && report.worst() < 1e-4;
  }
  out << (ok ? "gradients suite: PASS\n" : "gradients suite: FAIL\n");
  return ok ? 0 : 1;
}

inline int verify_oracles(std::ostream& out) {
  double worst = 0.0;
  for (Index dx : {Index(1), Index(4), Index(100)}) {
    for (double h = 0.001; h <= 1.5; h += 0.007) {
      const auto report = oracles::spectral_report(dx, h);
      worst = std::max(worst,
                       std::abs(report.rho_g - oracles::numeric_spectral_radius(
                                                   oracles::recursion_matrix_pga(dx, h))));
      worst = std::max(worst,
                       std::abs(report.rho_n - oracles::numeric_spectral_radius(
                                                   oracles::recursion_matrix_pqn(h))));
    }
  }
  out << "spectral closed-form vs eigenvalues: worst " << worst << " (tol 1e-12)\n";
  const bool ok = worst <= 1e-12;
  out << (ok ? "oracles suite: PASS\n" : "oracles suite: FAIL\n");
  return ok ? 0 : 1;
}

inline int verify_stationarity(std::ostream& out) {
  const auto model = ToyHierarchicalModel::synthetic(1, 207);
  const auto law = oracles::finite_n_stationary_toy(1, 4, model.observations());

  const int seeds = 6;
  std::vector<double> estimates;
  for (int s = 0; s < seeds; ++s) {
    RunConfig config;
    config.algorithm = Algorithm::mh_marginal;
    config.step_size = 0.05;
    config.n_particles = 4;
    config.n_steps = 8000;
    config.burn_in = 800;
    config.seed = static_cast<std::uint64_t>(6000 + s);
    config.snapshot_every = 1;
    const Trace trace = run(model, config);
    std::vector<Matrix> pools;
    for (const auto& [step, cloud] : trace.clouds)
      if (step > config.burn_in) pools.push_back(cloud);
    estimates.push_back(posterior_variance_estimate(pools)[0]);
  }
  double mean = 0.0;
  for (double v : estimates) mean += v;
  mean /= seeds;
  double ss = 0.0;
  for (double v : estimates) ss += (v - mean) * (v - mean);
  const double se = std::sqrt(ss / (seeds - 1) / seeds);
  const double target = law.cov(0, 0);
  out << "marginal MH stationary variance: " << mean << " vs " << target << " (3 s.e. = "
      << 3.0 * se << ")\n";
  const bool ok = std::abs(mean - target) <= 3.0 * se + 1e-6;
  out << (ok ? "stationarity suite: PASS\n" : "stationarity suite: FAIL\n");
  return ok ? 0 : 1;
}

inline int verify_suite(const std::string& name, std::ostream& out) {
  if (name == "gradients") return verify_gradients(out);
  if (name == "oracles") return verify_oracles(out);
  if (name == "stationarity") return verify_stationarity(out);
  out << "unknown verify suite: " << name << " (expected gradients, oracles, or stationarity)\n";
  return exit_config_error;
}

}  // namespace pmle

#endif  // PMLE_EXPERIMENT_HPP
