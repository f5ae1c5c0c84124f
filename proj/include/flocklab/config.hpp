#pragma once

// Line-oriented experiment configuration:  [section] headers followed by
// key = value entries. Unknown keys are rejected; validation failures name
// the offending key and constraint.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flocklab/align.hpp"
#include "flocklab/errors.hpp"
#include "flocklab/hydro.hpp"
#include "flocklab/kinetic.hpp"

namespace flocklab {

enum class ExperimentKind { particle, kinetic, hydro, limit_sweep, isothermal };

struct ExperimentConfig {
  // [experiment]
  ExperimentKind experiment = ExperimentKind::kinetic;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // [kernel]
  std::string kernel_family = "inverse_power";
  double kernel_alpha = 1.0;
  double kernel_value = 1.0;
  std::optional<double> kernel_lower_bound;
  std::vector<double> kernel_table_r, kernel_table_phi;

  // [map]
  std::string map_kind = "p_power";
  double p = 2.5;
  std::string general_h = "tanh";  // named profile for the general map
  double general_q = 1.0;
  double general_c_r = 1.0;

  // [domain]
  double L = 1.0;
  bool auto_v_bounds = true;
  double v_min = -1.0, v_max = 1.0;
  std::string particle_domain = "free";  // free | torus
  double particle_period = 1.0;

  // [discretization]
  int nx = 64;
  int nv = 128;
  int n_particles = 64;
  int markers = 256;
  std::string scheme = "upwind";          // upwind | muscl
  std::string hydro_solver = "lagrangian";  // lagrangian | eulerian
  double dt = 0.0;                        // 0 = CFL-derived where applicable
  int particle_dim = 1;

  // [time]
  double T = 0.5;
  double out_dt = 0.02;

  // [sweep]
  std::vector<double> epsilons = {0.2, 0.1, 0.05, 0.025};
  double epsilon = 0.1;  // single kinetic runs
  int w1_coarsen = 0;    // 0 = choose automatically under the atom cap

  // [initial]
  std::string preset = "sine_wave";
  double rho_amp = 0.5;
  double u_amp = 0.25;
  double extent = 1.0;     // particle lattice extent
  double v_spread = 1.0;   // particle velocity spread
  double jitter = 0.25;    // particle lattice jitter

  // [isothermal]
  double z_min = -3.0, z_max = 3.0, dz = 0.1;
  int quad_order = 64;
  std::string closed_form = "auto";  // auto | on | off

  // [tolerances]
  double vacuum_threshold = 1e-12;
  double support_cutoff = 1e-12;
  double cfl = 0.9;
  double regime_M = 20.0;
  int max_atoms = 400;

  CommunicationKernel make_kernel() const {
    if (kernel_family == "inverse_power") {
      auto k = CommunicationKernel::inverse_power(kernel_alpha);
      if (kernel_lower_bound) k.lower_bound = kernel_lower_bound;
      return k;
    }
    if (kernel_family == "constant") return CommunicationKernel::constant(kernel_value);
    return CommunicationKernel::from_table(kernel_table_r, kernel_table_phi);
  }

  AlignmentMap make_map() const {
    if (map_kind == "p_power") return AlignmentMap::p_power(p);
    double cr = general_c_r;
    if (general_h == "tanh")
      return AlignmentMap::general([](double r) { return std::tanh(r); }, general_q,
                                   [cr](double) { return cr; });
    throw config_error("map: unknown general profile '" + general_h + "'");
  }

  std::function<double(double)> make_rho0() const {
    double a = rho_amp;
    if (preset == "sine_wave")
      return [a](double x) { return 1.0 + a * std::sin(2.0 * std::numbers::pi * x); };
    if (preset == "flocked")
      return [a](double x) { return 1.0 + a * std::sin(2.0 * std::numbers::pi * x); };
    throw config_error("initial: unknown preset '" + preset + "'");
  }

  std::function<double(double)> make_u0() const {
    double a = u_amp;
    if (preset == "sine_wave")
      return [a](double x) { return a * std::sin(2.0 * std::numbers::pi * x); };
    if (preset == "flocked")
      return [a](double) { return a; };
    throw config_error("initial: unknown preset '" + preset + "'");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<double> parse_list(const std::string& v, const std::string& key, int line) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    char* end = nullptr;
    double x = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
      throw config_error("line " + std::to_string(line) + ": key '" + key +
                         "': bad number '" + tok + "'");
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  std::string line, section;
  int lineno = 0;
  std::set<std::string> seen;

  auto bad_key = [&](const std::string& key) {
    throw config_error("line " + std::to_string(lineno) + ": unknown key '" + key +
                       "' in section [" + section + "]");
  };
  auto fail = [&](const std::string& key, const std::string& what) {
    throw config_error("key '" + key + "': " + what);
  };

  while (std::getline(is, line)) {
    ++lineno;
    std::string::size_type hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw config_error("line " + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::string::size_type eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw config_error("line " + std::to_string(lineno) + ": empty key or value");
    std::string full = section + "." + key;
    if (!seen.insert(full).second)
      throw config_error("line " + std::to_string(lineno) + ": duplicate key '" + full + "'");

    auto num = [&]() {
      char* end = nullptr;
      double x = std::strtod(value.c_str(), &end);
      if (end == value.c_str() || *end != '\0')
        throw config_error("line " + std::to_string(lineno) + ": key '" + key +
                           "': bad number '" + value + "'");
      return x;
    };
    auto integer = [&]() {
      double x = num();
      if (x != std::floor(x))
        throw config_error("line " + std::to_string(lineno) + ": key '" + key +
                           "' must be an integer");
      return static_cast<long long>(x);
    };

    if (section == "experiment") {
      if (key == "kind") {
        if (value == "particle") cfg.experiment = ExperimentKind::particle;
        else if (value == "kinetic") cfg.experiment = ExperimentKind::kinetic;
        else if (value == "hydro") cfg.experiment = ExperimentKind::hydro;
        else if (value == "limit_sweep") cfg.experiment = ExperimentKind::limit_sweep;
        else if (value == "isothermal") cfg.experiment = ExperimentKind::isothermal;
        else fail(key, "must be particle|kinetic|hydro|limit_sweep|isothermal");
      } else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
      else if (key == "out_dir") cfg.out_dir = value;
      else bad_key(key);
    } else if (section == "kernel") {
      if (key == "family") {
        if (value != "inverse_power" && value != "constant" && value != "table")
          fail(key, "must be inverse_power|constant|table");
        cfg.kernel_family = value;
      } else if (key == "alpha") cfg.kernel_alpha = num();
      else if (key == "value") cfg.kernel_value = num();
      else if (key == "lower_bound") cfg.kernel_lower_bound = num();
      else if (key == "table_r") cfg.kernel_table_r = detail::parse_list(value, key, lineno);
      else if (key == "table_phi") cfg.kernel_table_phi = detail::parse_list(value, key, lineno);
      else bad_key(key);
    } else if (section == "map") {
      if (key == "kind") {
        if (value != "p_power" && value != "general") fail(key, "must be p_power|general");
        cfg.map_kind = value;
      } else if (key == "p") cfg.p = num();
      else if (key == "h") cfg.general_h = value;
      else if (key == "q") cfg.general_q = num();
      else if (key == "c_r") cfg.general_c_r = num();
      else bad_key(key);
    } else if (section == "domain") {
      if (key == "L") cfg.L = num();
      else if (key == "v_min") { cfg.v_min = num(); cfg.auto_v_bounds = false; }
      else if (key == "v_max") { cfg.v_max = num(); cfg.auto_v_bounds = false; }
      else if (key == "particle_domain") {
        if (value != "free" && value != "torus") fail(key, "must be free|torus");
        cfg.particle_domain = value;
      } else if (key == "particle_period") cfg.particle_period = num();
      else bad_key(key);
    } else if (section == "discretization") {
      if (key == "nx") cfg.nx = static_cast<int>(integer());
      else if (key == "nv") cfg.nv = static_cast<int>(integer());
      else if (key == "n_particles") cfg.n_particles = static_cast<int>(integer());
      else if (key == "markers") cfg.markers = static_cast<int>(integer());
      else if (key == "dt") cfg.dt = num();
      else if (key == "particle_dim") cfg.particle_dim = static_cast<int>(integer());
      else if (key == "scheme") {
        if (value != "upwind" && value != "muscl") fail(key, "must be upwind|muscl");
        cfg.scheme = value;
      } else if (key == "hydro_solver") {
        if (value != "lagrangian" && value != "eulerian")
          fail(key, "must be lagrangian|eulerian");
        cfg.hydro_solver = value;
      } else bad_key(key);
    } else if (section == "time") {
      if (key == "T") cfg.T = num();
      else if (key == "out_dt") cfg.out_dt = num();
      else bad_key(key);
    } else if (section == "sweep") {
      if (key == "epsilons") cfg.epsilons = detail::parse_list(value, key, lineno);
      else if (key == "epsilon") cfg.epsilon = num();
      else if (key == "w1_coarsen") cfg.w1_coarsen = static_cast<int>(integer());
      else bad_key(key);
    } else if (section == "initial") {
      if (key == "preset") cfg.preset = value;
      else if (key == "rho_amp") cfg.rho_amp = num();
      else if (key == "u_amp") cfg.u_amp = num();
      else if (key == "extent") cfg.extent = num();
      else if (key == "v_spread") cfg.v_spread = num();
      else if (key == "jitter") cfg.jitter = num();
      else bad_key(key);
    } else if (section == "isothermal") {
      if (key == "z_min") cfg.z_min = num();
      else if (key == "z_max") cfg.z_max = num();
      else if (key == "dz") cfg.dz = num();
      else if (key == "quad_order") cfg.quad_order = static_cast<int>(integer());
      else if (key == "closed_form") {
        if (value != "auto" && value != "on" && value != "off")
          fail(key, "must be auto|on|off");
        cfg.closed_form = value;
      } else bad_key(key);
    } else if (section == "tolerances") {
      if (key == "vacuum_threshold") cfg.vacuum_threshold = num();
      else if (key == "support_cutoff") cfg.support_cutoff = num();
      else if (key == "cfl") cfg.cfl = num();
      else if (key == "regime_M") cfg.regime_M = num();
      else if (key == "max_atoms") cfg.max_atoms = static_cast<int>(integer());
      else bad_key(key);
    } else {
      throw config_error("line " + std::to_string(lineno) + ": unknown section [" +
                         section + "]");
    }
  }

  // ---- validation ----
  auto require = [&](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw config_error("key '" + key + "': " + what);
  };
  require(cfg.p >= 2.0, "map.p", "constraint p >= 2 violated");
  require(cfg.general_q > 0.0 && cfg.general_q <= 1.0, "map.q", "must lie in (0, 1]");
  require(cfg.kernel_alpha >= 0.0, "kernel.alpha", "must be >= 0");
  require(cfg.kernel_value >= 0.0, "kernel.value", "must be >= 0");
  require(cfg.L > 0.0, "domain.L", "must be > 0");
  require(cfg.nx >= 4 && cfg.nx <= 8192, "discretization.nx", "must lie in [4, 8192]");
  require(cfg.nv >= 8 && cfg.nv <= 8192, "discretization.nv", "must lie in [8, 8192]");
  require(cfg.n_particles >= 1 && cfg.n_particles <= 100000,
          "discretization.n_particles", "must lie in [1, 100000]");
  require(cfg.markers >= 4 && cfg.markers <= 100000, "discretization.markers",
          "must lie in [4, 100000]");
  require(cfg.particle_dim == 1 || cfg.particle_dim == 2, "discretization.particle_dim",
          "must be 1 or 2");
  require(cfg.dt >= 0.0, "discretization.dt", "must be >= 0");
  require(cfg.T >= 0.0, "time.T", "must be >= 0");
  require(cfg.out_dt > 0.0, "time.out_dt", "must be > 0");
  require(cfg.cfl > 0.0 && cfg.cfl <= 0.95, "tolerances.cfl", "must lie in (0, 0.95]");
  require(cfg.vacuum_threshold > 0.0, "tolerances.vacuum_threshold", "must be > 0");
  require(cfg.support_cutoff > 0.0, "tolerances.support_cutoff", "must be > 0");
  require(cfg.regime_M > 0.0, "tolerances.regime_M", "must be > 0");
  require(cfg.max_atoms >= 16, "tolerances.max_atoms", "must be >= 16");
  require(cfg.epsilon > 0.0, "sweep.epsilon", "must be > 0");
  require(!cfg.auto_v_bounds ? cfg.v_max > cfg.v_min : true, "domain.v_max",
          "must exceed v_min");
  require(cfg.rho_amp > -1.0 && cfg.rho_amp < 1.0, "initial.rho_amp",
          "must lie in (-1, 1) to keep rho0 positive");
  if (cfg.experiment == ExperimentKind::limit_sweep) {
    require(cfg.epsilons.size() >= 2, "sweep.epsilons", "need at least 2 values");
    for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
      require(cfg.epsilons[i] > 0.0, "sweep.epsilons", "entries must be > 0");
      if (i > 0)
        require(cfg.epsilons[i] < cfg.epsilons[i - 1], "sweep.epsilons",
                "must be strictly decreasing");
    }
  }
  if (cfg.kernel_family == "table")
    require(cfg.kernel_table_r.size() >= 2 &&
                cfg.kernel_table_r.size() == cfg.kernel_table_phi.size(),
            "kernel.table_r", "table kernels need matching r/phi lists");
  if (cfg.experiment == ExperimentKind::isothermal) {
    require(cfg.z_max > cfg.z_min, "isothermal.z_max", "must exceed z_min");
    require(cfg.dz > 0.0, "isothermal.dz", "must be > 0");
    require(cfg.quad_order >= 8, "isothermal.quad_order", "must be >= 8");
    if (cfg.closed_form == "on") {
      bool even_integer = (cfg.p == std::floor(cfg.p)) &&
                          (static_cast<long long>(cfg.p) % 2 == 0);
      require(even_integer || cfg.p == 2.0, "isothermal.closed_form",
              "closed form needs even integer p; use quadrature-only mode "
              "(closed_form = off)");
    }
  }
  // constructing kernel/map surfaces any remaining inconsistency
  cfg.make_kernel();
  cfg.make_map();
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file: " + path);
  return parse_config(is);
}

}  // namespace flocklab
