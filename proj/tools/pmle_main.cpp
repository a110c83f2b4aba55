// Experiment CLI: config-driven runs, verification suites, and spectral-radius
// tables. See README.md for the config schema and output formats.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pmle/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pmle: particle-based maximum marginal likelihood estimation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_dir;
  std::uint64_t seed_override = 0;
  bool seed_set = false;

  auto* run_cmd = app.add_subcommand("run", "run an experiment from a JSON config");
  run_cmd->add_option("config", config_path, "path to the experiment config")->required();
  run_cmd->add_option("--data-dir", data_dir, "dataset directory (overrides PMLE_DATA_DIR)");
  run_cmd
      ->add_option_function<std::uint64_t>(
          "--seed", [&](std::uint64_t s) { seed_override = s; seed_set = true; },
          "override the config seed")
      ->expected(1);

  std::string suite;
  auto* verify_cmd = app.add_subcommand("verify", "run a verification suite");
  verify_cmd->add_option("suite", suite, "gradients | oracles | stationarity")->required();

  pmle::Index spectral_dx = 100;
  double h_min = 0.001, h_max = 1.5;
  pmle::Index spectral_steps = 200;
  std::string spectral_out;
  auto* spectral_cmd = app.add_subcommand("spectral", "emit spectral radii as CSV");
  spectral_cmd->add_option("--dx", spectral_dx, "latent dimension")->check(CLI::PositiveNumber);
  spectral_cmd->add_option("--hmin", h_min, "smallest step size")->check(CLI::PositiveNumber);
  spectral_cmd->add_option("--hmax", h_max, "largest step size")->check(CLI::PositiveNumber);
  spectral_cmd->add_option("--steps", spectral_steps, "grid points")->check(CLI::PositiveNumber);
  spectral_cmd->add_option("--out", spectral_out, "output file (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      pmle::RunOverrides overrides;
      if (seed_set) overrides.seed = seed_override;
      overrides.data_dir = data_dir;
      return pmle::run_experiment_file(config_path, overrides);
    }
    if (verify_cmd->parsed()) {
      return pmle::verify_suite(suite, std::cout);
    }
    if (spectral_cmd->parsed()) {
      const std::string csv = pmle::spectral_csv(spectral_dx, h_min, h_max, spectral_steps);
      if (spectral_out.empty()) {
        std::cout << csv;
      } else {
        pmle::io::write_file_atomic(spectral_out, csv);
      }
      return 0;
    }
  } catch (const pmle::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return pmle::exit_config_error;
  } catch (const pmle::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return pmle::exit_data_error;
  } catch (const pmle::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return pmle::exit_divergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
