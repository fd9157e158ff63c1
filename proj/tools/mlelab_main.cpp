// mlelab: simulate normalized MLE errors for parametric families, estimate
// their information-theoretic distance to the standard normal, and persist
// the results as csv/json artifacts with a binary replicate cache.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mlelab/runner.hpp"

namespace {

// Precedence: --out flag, then MLELAB_OUT, then the config's own value.
mlelab::ExperimentConfig resolve_config(const std::string& config_path, const std::string& preset,
                                        const std::string& out_override) {
  if (config_path.empty() == preset.empty()) {
    throw mlelab::ConfigError("exactly one of --config and --preset is required");
  }
  mlelab::ExperimentConfig cfg =
      config_path.empty() ? mlelab::make_preset(preset) : mlelab::load_config_file(config_path);
  const char* env_out = std::getenv("MLELAB_OUT");
  if (env_out != nullptr && env_out[0] != '\0') cfg.out = env_out;
  if (!out_override.empty()) cfg.out = out_override;
  mlelab::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo laboratory for normalized maximum-likelihood errors"};
  app.require_subcommand(1);

  std::string config_path, preset, out_override;
  int workers = 1;

  CLI::App* run = app.add_subcommand("run", "simulate, estimate, and write artifacts");
  run->add_option("--config", config_path, "experiment config file");
  run->add_option("--preset", preset, "built-in preset name");
  run->add_option("--out", out_override, "output directory override");
  run->add_option("--workers", workers, "worker thread count (does not affect results)");

  CLI::App* verify = app.add_subcommand("verify", "recompute diagnostics from the cache");
  verify->add_option("--config", config_path, "experiment config file");
  verify->add_option("--preset", preset, "built-in preset name");
  verify->add_option("--out", out_override, "output directory override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const mlelab::ExperimentConfig cfg = resolve_config(config_path, preset, out_override);
    if (run->parsed()) return mlelab::run_experiment(cfg, workers, std::cout);
    return mlelab::verify_experiment(cfg, std::cout);
  } catch (const mlelab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
