#pragma once

// Configuration-driven experiment drivers behind the CLI: single runs,
// epsilon-sweeps for the hydrodynamic limit, and the isothermal Psi table.
// All artifacts are CSV/text files with full-precision decimals, so repeated
// runs of one config + seed are byte-identical.

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "flocklab/config.hpp"
#include "flocklab/errors.hpp"
#include "flocklab/hydro.hpp"
#include "flocklab/kinetic.hpp"
#include "flocklab/particle.hpp"
#include "flocklab/series.hpp"
#include "flocklab/transport.hpp"

namespace flocklab {

inline void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + path);
}

inline std::string eps_tag(double eps) {
  std::ostringstream os;
  os << eps;
  std::string s = os.str();
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

// ---------------------------------------------------------------------------
// Invariant checks shared by `run --check-invariants` and the sweep
// ---------------------------------------------------------------------------

struct InvariantReport {
  bool ok = true;
  std::vector<std::string> violations;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      violations.push_back(what);
    }
  }
};

inline void check_kinetic_series(const DiagnosticSeries& s, double eps, double cp_bound,
                                 double q, InvariantReport& rep) {
  auto t = s.column("t");
  auto mass = s.column("mass");
  auto mom = s.column("momentum");
  auto minf = s.column("min_f");
  auto E = s.column("E_kin");
  auto Emac = s.column("E_mac");
  auto D1 = s.column("D1");
  auto Dmac = s.column("D_mac");
  auto Delta = s.column("Delta");
  auto D2 = s.column("D2");
  auto G = s.column("G_norm");
  auto u_inf = s.column("u_inf");
  for (std::size_t i = 0; i < t.size(); ++i) {
    rep.require(std::abs(mass[i] - mass[0]) <= 1e-10, "mass drift at t=" + format_full(t[i]));
    rep.require(std::abs(mom[i] - mom[0]) <= 1e-8 * std::max(1.0, t[i]),
                "momentum drift at t=" + format_full(t[i]));
    rep.require(minf[i] >= -1e-14, "negativity at t=" + format_full(t[i]));
    rep.require(Emac[i] <= E[i] + 1e-12, "E_mac > E_kin at t=" + format_full(t[i]));
    rep.require(Dmac[i] <= D1[i] + std::abs(Delta[i]) + 1e-12,
                "D_mac > D1 + |Delta| at t=" + format_full(t[i]));
    double bound = 0.5 * cp_bound * std::pow(D2[i], 0.5 * q) + 1e-12;
    rep.require(std::abs(Delta[i]) <= bound,
                "discrepancy bound violated at t=" + format_full(t[i]));
    rep.require(G[i] * u_inf[i] <= bound,
                "alignment discrepancy pairing bound violated at t=" + format_full(t[i]));
  }
  double intD2 = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i)
    intD2 += 0.5 * (t[i] - t[i - 1]) * (D2[i] + D2[i - 1]);
  rep.require(intD2 <= 1.1 * eps * E[0] + 1e-15,
              "relaxation budget: int D2 > 1.1 eps E(0)");
}

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

inline int cmd_run(const ExperimentConfig& cfg, bool check_invariants = false,
                   std::ostream& log = std::cout) {
  ensure_dir(cfg.out_dir);
  auto kernel = cfg.make_kernel();
  auto map = cfg.make_map();

  if (cfg.experiment == ExperimentKind::particle) {
    ParticleRunConfig pc;
    pc.init.n = cfg.n_particles;
    pc.init.dim = cfg.particle_dim;
    pc.init.period = (cfg.particle_domain == "torus") ? cfg.particle_period : 0.0;
    pc.init.extent = cfg.extent;
    pc.init.v_spread = (cfg.preset == "flocked") ? 0.0 : cfg.v_spread;
    pc.init.jitter = cfg.jitter;
    pc.init.seed = cfg.seed;
    pc.dt = (cfg.dt > 0.0) ? cfg.dt : 1e-2;
    pc.T = cfg.T;
    pc.out_dt = cfg.out_dt;
    auto res = run_particle(pc, kernel, map);
    write_csv(cfg.out_dir + "/series.csv", res.series);
    std::ofstream snap(cfg.out_dir + "/final_snapshot.txt");
    snap << "particles " << res.final_state.n() << ' ' << res.final_state.dim << ' '
         << format_full(res.final_state.time) << '\n';
    for (int i = 0; i < res.final_state.n(); ++i) {
      for (int c = 0; c < res.final_state.dim; ++c)
        snap << format_full(res.final_state.pos[static_cast<std::size_t>(i) *
                                                    res.final_state.dim +
                                                c])
             << ' ';
      for (int c = 0; c < res.final_state.dim; ++c)
        snap << format_full(res.final_state.vel[static_cast<std::size_t>(i) *
                                                    res.final_state.dim +
                                                c])
             << (c + 1 < res.final_state.dim ? " " : "");
      snap << '\n';
    }
    InvariantReport rep;
    if (check_invariants) {
      auto mv = res.series.column(cfg.particle_dim == 1 ? "mean_v" : "mean_vx");
      auto V = res.series.column("V");
      for (std::size_t i = 0; i < mv.size(); ++i) {
        rep.require(std::abs(mv[i] - mv[0]) <=
                        1e-10 * std::max(1.0, res.series.rows[i][0]),
                    "mean velocity drift");
        if (i > 0) rep.require(V[i] <= V[i - 1] + 1e-6, "velocity diameter grew");
      }
    }
    log << "particle run: N=" << pc.init.n << " T=" << format_full(cfg.T)
        << " S=" << format_full(res.series.last("S"))
        << " V=" << format_full(res.series.last("V")) << '\n';
    for (const auto& v : rep.violations) log << "invariant violation: " << v << '\n';
    return rep.ok ? 0 : 1;
  }

  if (cfg.experiment == ExperimentKind::kinetic) {
    PrepGridSpec spec{cfg.nx, cfg.nv, cfg.L};
    spec.auto_v_bounds = cfg.auto_v_bounds;
    spec.v_min = cfg.v_min;
    spec.v_max = cfg.v_max;
    auto prep = prepare_initial(cfg.make_rho0(), cfg.make_u0(), cfg.epsilon, spec);
    KineticRunConfig kc;
    kc.T = cfg.T;
    kc.out_dt = cfg.out_dt;
    kc.dt = cfg.dt;
    kc.cfl = cfg.cfl;
    kc.scheme = (cfg.scheme == "muscl") ? KineticScheme::muscl : KineticScheme::upwind;
    kc.vacuum_threshold = cfg.vacuum_threshold;
    kc.support_cutoff = cfg.support_cutoff;
    kc.keep_snapshots = true;
    auto res = run_kinetic(prep.f, kernel, map, kc);

    // energy-balance residual column: E(t) - E(0) + int (D1 + D2/eps)
    DiagnosticSeries out = res.series;
    out.columns.push_back("balance_residual");
    auto t = res.series.column("t");
    auto E = res.series.column("E_kin");
    auto D1 = res.series.column("D1");
    auto D2 = res.series.column("D2");
    double acc = 0.0;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      if (i > 0)
        acc += 0.5 * (t[i] - t[i - 1]) *
               (D1[i] + D1[i - 1] + (D2[i] + D2[i - 1]) / cfg.epsilon);
      out.rows[i].push_back(E[i] - E[0] + acc);
    }
    write_csv(cfg.out_dir + "/series.csv", out);

    std::ofstream snap(cfg.out_dir + "/final_snapshot.txt");
    write_phase_snapshot(snap, res.snapshots.back());

    InvariantReport rep;
    if (check_invariants) {
      MomentFields m0 = moments(prep.f, cfg.vacuum_threshold);
      double u0inf = 0.0;
      for (std::size_t i = 0; i < m0.u.size(); ++i)
        if (!m0.vacuum_mask[i]) u0inf = std::max(u0inf, std::abs(m0.u[i]));
      SupportDiameters sup0 = support_diameters(prep.f, cfg.support_cutoff);
      double cp = map.holder_coeff(sup0.V + 2.0 * prep.f.grid.dv());
      double Cp = 8.0 * cp * kernel.sup_norm * u0inf * u0inf;
      check_kinetic_series(res.series, cfg.epsilon, Cp, map.q, rep);
    }
    log << "kinetic run: eps=" << format_full(cfg.epsilon) << " T=" << format_full(cfg.T)
        << " E_kin=" << format_full(res.series.last("E_kin"))
        << " D2=" << format_full(res.series.last("D2"))
        << " balance_residual=" << format_full(out.rows.back().back()) << '\n';
    for (const auto& v : rep.violations) log << "invariant violation: " << v << '\n';
    return rep.ok ? 0 : 1;
  }

  if (cfg.experiment == ExperimentKind::hydro) {
    HydroRunConfig hc;
    hc.representation = (cfg.hydro_solver == "eulerian") ? HydroRepr::eulerian
                                                         : HydroRepr::lagrangian;
    hc.n = (hc.representation == HydroRepr::eulerian) ? cfg.nx : cfg.markers;
    hc.L = cfg.L;
    hc.dt = (cfg.dt > 0.0) ? cfg.dt : (hc.representation == HydroRepr::lagrangian ? 1e-3 : 0.0);
    hc.T = cfg.T;
    hc.out_dt = cfg.out_dt;
    hc.cfl = cfg.cfl;
    hc.scheme = (cfg.scheme == "muscl") ? FluxScheme::muscl : FluxScheme::upwind;
    hc.regime_M = cfg.regime_M;
    hc.vacuum_threshold = cfg.vacuum_threshold;
    hc.rho0 = cfg.make_rho0();
    hc.u0 = cfg.make_u0();
    hc.keep_snapshots = true;
    auto res = run_hydro(hc, kernel, map);
    write_csv(cfg.out_dir + "/series.csv", res.series);
    std::ofstream snap(cfg.out_dir + "/final_snapshot.txt");
    write_hydro_snapshot(snap, res.snapshots.back(), cfg.vacuum_threshold);

    InvariantReport rep;
    if (check_invariants) {
      auto mom = res.series.column("momentum");
      auto V = res.series.column("V");
      auto t = res.series.column("t");
      for (std::size_t i = 0; i < mom.size(); ++i) {
        rep.require(std::abs(mom[i] - mom[0]) <= 1e-8 * std::max(1.0, t[i]),
                    "momentum drift");
        if (i > 0) rep.require(V[i] <= V[i - 1] + 1e-8, "velocity range grew");
      }
    }
    log << "hydro run: " << cfg.hydro_solver << " n=" << hc.n << " T=" << format_full(cfg.T);
    if (res.regime_exit)
      log << " regime_exit=1 regime_time=" << format_full(res.regime_time) << " ("
          << res.regime_reason << ")";
    else
      log << " regime_exit=0 lip_u=" << format_full(res.series.last("lip_u"));
    log << '\n';
    for (const auto& v : rep.violations) log << "invariant violation: " << v << '\n';
    return rep.ok ? 0 : 1;
  }

  throw config_error("cmd_run: experiment kind must be particle|kinetic|hydro");
}

// ---------------------------------------------------------------------------
// Hydrodynamic-limit sweep
// ---------------------------------------------------------------------------

struct SweepEpsResult {
  double eps = 0.0;
  DiagnosticSeries series;  ///< kinetic columns + eta, eta_K, W1_rho
  double eta_T = 0.0, etaK_T = 0.0, w1_rho_T = 0.0;
  double w1_phase_T = 0.0, w1_phase_bar = 0.0;
  double int_D2 = 0.0, E0 = 0.0;
  std::string error;  ///< non-empty if the instance failed
};

inline int cmd_limit_sweep(const ExperimentConfig& cfg, int threads = 1,
                           bool check_invariants = false, std::ostream& log = std::cout) {
  if (cfg.experiment != ExperimentKind::limit_sweep)
    throw config_error("cmd_limit_sweep: experiment kind is not limit_sweep");
  ensure_dir(cfg.out_dir);
  auto kernel = cfg.make_kernel();
  auto map = cfg.make_map();

  // one hydrodynamic reference for the whole sweep
  HydroRunConfig hc;
  hc.representation = HydroRepr::lagrangian;
  hc.n = cfg.markers;
  hc.L = cfg.L;
  hc.dt = (cfg.dt > 0.0) ? std::min(cfg.dt, 1e-3) : 1e-3;
  hc.T = cfg.T;
  hc.out_dt = cfg.out_dt;
  hc.regime_M = cfg.regime_M;
  hc.rho0 = cfg.make_rho0();
  hc.u0 = cfg.make_u0();
  auto hydro = run_hydro(hc, kernel, map);
  if (hydro.regime_exit)
    throw solver_fault("limit_sweep: hydrodynamic reference left the strong-solution "
                       "regime at t = " +
                       format_full(hydro.regime_time) + "; shorten T");
  write_csv(cfg.out_dir + "/hydro.csv", hydro.series);
  double M_measured = 0.0;
  for (double l : hydro.series.column("lip_u")) M_measured = std::max(M_measured, l);

  std::vector<std::vector<double>> u_ref(hydro.snapshots.size());
  std::vector<std::vector<double>> rho_ref(hydro.snapshots.size());
  for (std::size_t k = 0; k < hydro.snapshots.size(); ++k) {
    u_ref[k] = hydro_velocity_on_grid(hydro.snapshots[k], cfg.nx, cfg.L);
    rho_ref[k] = hydro_density_on_grid(hydro.snapshots[k], cfg.nx, cfg.L);
  }

  auto run_one = [&](double eps) {
    SweepEpsResult r;
    r.eps = eps;
    try {
      PrepGridSpec spec{cfg.nx, cfg.nv, cfg.L};
      spec.auto_v_bounds = cfg.auto_v_bounds;
      spec.v_min = cfg.v_min;
      spec.v_max = cfg.v_max;
      auto prep = prepare_initial(cfg.make_rho0(), cfg.make_u0(), eps, spec);
      KineticRunConfig kc;
      kc.T = cfg.T;
      kc.out_dt = cfg.out_dt;
      kc.dt = cfg.dt;
      kc.cfl = cfg.cfl;
      kc.scheme = (cfg.scheme == "muscl") ? KineticScheme::muscl : KineticScheme::upwind;
      kc.vacuum_threshold = cfg.vacuum_threshold;
      kc.support_cutoff = cfg.support_cutoff;
      kc.keep_snapshots = true;
      auto res = run_kinetic(prep.f, kernel, map, kc);
      if (res.snapshots.size() != hydro.snapshots.size())
        throw solver_fault("limit_sweep: output-time mismatch between solvers");

      r.series = res.series;
      r.series.columns.push_back("eta");
      r.series.columns.push_back("eta_K");
      r.series.columns.push_back("W1_rho");
      DiscreteMeasure rho_h_T;
      for (std::size_t k = 0; k < res.snapshots.size(); ++k) {
        const MomentFields& m = res.moment_snapshots[k];
        double eta = relative_entropy(m, u_ref[k], cfg.L / cfg.nx);
        double etaK = kinetic_relative_entropy(res.snapshots[k], u_ref[k]);
        DiscreteMeasure a = measure_from_grid(m.rho, cfg.L);
        DiscreteMeasure b = measure_from_grid(rho_ref[k], cfg.L);
        a.normalize();
        b.normalize();
        double w1r = w1_1d(a, b);
        r.series.rows[k].push_back(eta);
        r.series.rows[k].push_back(etaK);
        r.series.rows[k].push_back(w1r);
        if (k + 1 == res.snapshots.size()) {
          r.eta_T = eta;
          r.etaK_T = etaK;
          r.w1_rho_T = w1r;
        }
      }
      int coarsen = cfg.w1_coarsen;
      if (coarsen <= 0) {
        coarsen = 1;
        for (; coarsen < 64; ++coarsen)
          if (static_cast<int>(phase_atoms(res.snapshots.back(), coarsen).points.size()) <=
              cfg.max_atoms)
            break;
      }
      auto pw = phase_w1(res.snapshots.back(), hydro.snapshots.back(), coarsen,
                         cfg.max_atoms, cfg.vacuum_threshold);
      r.w1_phase_T = pw.value;
      r.w1_phase_bar = pw.error_bar;

      auto ts = res.series.column("t");
      auto D2 = res.series.column("D2");
      for (std::size_t i = 1; i < ts.size(); ++i)
        r.int_D2 += 0.5 * (ts[i] - ts[i - 1]) * (D2[i] + D2[i - 1]);
      r.E0 = res.series.rows.front()[res.series.column_index("E_kin")];

      if (check_invariants) {
        MomentFields m0 = moments(prep.f, cfg.vacuum_threshold);
        double u0inf = 0.0;
        for (std::size_t i = 0; i < m0.u.size(); ++i)
          if (!m0.vacuum_mask[i]) u0inf = std::max(u0inf, std::abs(m0.u[i]));
        SupportDiameters sup0 = support_diameters(prep.f, cfg.support_cutoff);
        double cp = map.holder_coeff(sup0.V + 2.0 * prep.f.grid.dv());
        double Cp = 8.0 * cp * kernel.sup_norm * u0inf * u0inf;
        InvariantReport rep;
        check_kinetic_series(res.series, eps, Cp, map.q, rep);
        if (!rep.ok) r.error = "invariant violations: " + rep.violations.front();
      }
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  };

  std::vector<SweepEpsResult> results(cfg.epsilons.size());
  if (threads > 1) {
    std::vector<std::future<SweepEpsResult>> futs;
    for (double eps : cfg.epsilons)
      futs.push_back(std::async(std::launch::async, run_one, eps));
    for (std::size_t i = 0; i < futs.size(); ++i) results[i] = futs[i].get();
  } else {
    for (std::size_t i = 0; i < cfg.epsilons.size(); ++i)
      results[i] = run_one(cfg.epsilons[i]);
  }

  bool failed = false;
  for (const auto& r : results) {
    if (!r.error.empty()) {
      failed = true;
      continue;
    }
    write_csv(cfg.out_dir + "/kinetic_eps_" + eps_tag(r.eps) + ".csv", r.series);
  }

  if (failed) {
    std::ofstream manifest(cfg.out_dir + "/manifest.txt");
    manifest << "partial results: some epsilon instances failed\n";
    for (const auto& r : results)
      manifest << "eps=" << format_full(r.eps) << ": "
               << (r.error.empty() ? "ok" : r.error) << '\n';
    log << "limit_sweep: aborted with partial results, see " << cfg.out_dir
        << "/manifest.txt\n";
    return 2;
  }

  DiagnosticSeries sweep;
  sweep.columns = {"epsilon", "eta_T", "eta_K_T", "W1_rho_T", "W1_phase_T",
                   "W1_phase_bar", "eta_plus_w1sq", "int_D2", "E0", "M_measured"};
  // rows ordered by decreasing epsilon, matching the configured list
  for (const auto& r : results) {
    std::vector<double> row = {r.eps, r.eta_T, r.etaK_T, r.w1_rho_T, r.w1_phase_T,
                               r.w1_phase_bar, r.eta_T + r.w1_rho_T * r.w1_rho_T,
                               r.int_D2, r.E0, M_measured};
    sweep.rows.push_back(row);  // epsilon decreases, so bypass append()'s t check
  }
  write_csv(cfg.out_dir + "/sweep.csv", sweep);

  double q = map.q;
  std::vector<std::string> names = {"eta_plus_w1sq", "eta", "W1_phase"};
  std::vector<std::vector<std::pair<double, double>>> pts(3);
  for (const auto& r : results) {
    pts[0].emplace_back(r.eps, r.eta_T + r.w1_rho_T * r.w1_rho_T);
    pts[1].emplace_back(r.eps, std::max(r.eta_T, 1e-300));
    pts[2].emplace_back(r.eps, std::max(r.w1_phase_T, 1e-300));
  }
  std::ofstream rf(cfg.out_dir + "/rates.csv");
  rf << "quantity,slope,intercept,r2,q,guaranteed_rate\n";
  const bool fittable = results.size() >= 3;
  if (fittable) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      auto fit = fit_rate(pts[k]);
      rf << names[k] << ',' << format_full(fit.slope) << ',' << format_full(fit.intercept)
         << ',' << format_full(fit.r2) << ',' << format_full(q) << ','
         << format_full(q / (2.0 - q)) << '\n';
    }
  }

  log << "limit_sweep: " << results.size() << " epsilon runs";
  if (fittable)
    log << ", eta+W1^2 slope=" << format_full(fit_rate(pts[0]).slope)
        << " (guaranteed rate q/(2-q)=" << format_full(q / (2.0 - q)) << ")";
  log << ", M_measured=" << format_full(M_measured) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Isothermal Psi table
// ---------------------------------------------------------------------------

inline int cmd_isothermal(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.experiment != ExperimentKind::isothermal)
    throw config_error("cmd_isothermal: experiment kind is not isothermal");
  ensure_dir(cfg.out_dir);
  auto map = cfg.make_map();
  bool even_integer = (cfg.p == std::floor(cfg.p)) &&
                      (static_cast<long long>(cfg.p) % 2 == 0) && cfg.map_kind == "p_power";
  bool closed = (cfg.closed_form == "on") ||
                (cfg.closed_form == "auto" && even_integer);
  if (cfg.closed_form == "on" && !even_integer)
    throw config_error(
        "isothermal: closed form needs even integer p; use closed_form = off "
        "(quadrature-only mode)");

  std::ofstream os(cfg.out_dir + "/psi.csv");
  if (closed)
    os << "z,psi_quadrature,psi_closed_form,abs_err\n";
  else
    os << "z,psi_quadrature\n";
  int k = static_cast<int>(cfg.p) / 2;
  double max_err = 0.0;
  for (double z = cfg.z_min; z <= cfg.z_max + 1e-12; z += cfg.dz) {
    double quad = psi_map(map, z, cfg.quad_order);
    if (closed) {
      double exact = psi_closed_form(k, z);
      double err = std::abs(quad - exact);
      max_err = std::max(max_err, err);
      os << format_full(z) << ',' << format_full(quad) << ',' << format_full(exact) << ','
         << format_full(err) << '\n';
    } else {
      os << format_full(z) << ',' << format_full(quad) << '\n';
    }
  }
  log << "isothermal: psi.csv written for p=" << format_full(cfg.p)
      << (closed ? " max_abs_err=" + format_full(max_err) : " (quadrature only)") << '\n';
  return 0;
}

}  // namespace flocklab
