// Command-line front end: configuration-driven particle / kinetic / hydro
// runs, hydrodynamic-limit sweeps, and the isothermal Psi table.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "flocklab/experiments.hpp"

namespace {

flocklab::ExperimentConfig load(const std::string& path, const std::string& out_override) {
  flocklab::ExperimentConfig cfg = flocklab::parse_config(path);
  if (!out_override.empty()) {
    cfg.out_dir = out_override;
  } else if (const char* env = std::getenv("FLOCKLAB_OUT_DIR")) {
    if (cfg.out_dir == "out") cfg.out_dir = env;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flocklab: particle / kinetic / hydrodynamic flocking laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int threads = 1;
  bool check_invariants = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--threads", threads, "concurrent epsilon instances (sweep only)");
    sub->add_flag("--check-invariants", check_invariants,
                  "verify conservation and inequality invariants along the run");
  };

  CLI::App* run = app.add_subcommand("run", "single particle/kinetic/hydro experiment");
  CLI::App* sweep = app.add_subcommand("sweep", "epsilon sweep toward the hydrodynamic limit");
  CLI::App* iso = app.add_subcommand("isothermal", "tabulate the effective isothermal map");
  add_common(run);
  add_common(sweep);
  add_common(iso);

  CLI11_PARSE(app, argc, argv);

  try {
    flocklab::ExperimentConfig cfg = load(config_path, out_dir);
    if (run->parsed()) return flocklab::cmd_run(cfg, check_invariants);
    if (sweep->parsed()) return flocklab::cmd_limit_sweep(cfg, threads, check_invariants);
    return flocklab::cmd_isothermal(cfg);
  } catch (const flocklab::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
