#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "flocklab/experiments.hpp"

using namespace flocklab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig parse_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("minimal kinetic config fills documented defaults") {
  auto cfg = parse_text("[experiment]\nkind = kinetic\n");
  CHECK(cfg.nx == 64);
  CHECK(cfg.nv == 128);
  CHECK(cfg.cfl == doctest::Approx(0.9));
  CHECK(cfg.vacuum_threshold == doctest::Approx(1e-12));
  CHECK(cfg.scheme == "upwind");
  CHECK(cfg.preset == "sine_wave");
}

TEST_CASE("validation failures name the key and constraint") {
  CHECK_THROWS_WITH_AS(parse_text("[map]\np = 1.5\n"),
                       doctest::Contains("p >= 2"), config_error);
  CHECK_THROWS_WITH_AS(
      parse_text("[experiment]\nkind = limit_sweep\n[sweep]\nepsilons = 0.1, 0.2\n"),
      doctest::Contains("strictly decreasing"), config_error);
  CHECK_THROWS_WITH_AS(parse_text("[time]\nout_dt = -0.5\n"),
                       doctest::Contains("out_dt"), config_error);
}

TEST_CASE("parse errors carry line numbers, unknown keys are rejected") {
  CHECK_THROWS_WITH_AS(parse_text("[experiment]\nkind = kinetic\nbogus_key = 3\n"),
                       doctest::Contains("line 3"), config_error);
  CHECK_THROWS_WITH_AS(parse_text("[experiment]\nkind kinetic\n"),
                       doctest::Contains("line 2"), config_error);
  CHECK_THROWS_WITH_AS(parse_text("[nosuch]\nx = 1\n"),
                       doctest::Contains("unknown section"), config_error);
  CHECK_THROWS_WITH_AS(parse_text("[time]\nT = 1\nT = 2\n"),
                       doctest::Contains("duplicate"), config_error);
}

TEST_CASE("explicit v bounds disable the automatic domain") {
  auto cfg = parse_text("[domain]\nv_min = -0.5\nv_max = 0.5\n");
  CHECK(!cfg.auto_v_bounds);
  CHECK(cfg.v_min == doctest::Approx(-0.5));
  auto bad = "[domain]\nv_min = 0.5\nv_max = -0.5\n";
  CHECK_THROWS_AS(parse_text(bad), config_error);
}

TEST_CASE("kernel and map construction from config") {
  auto cfg = parse_text(
      "[kernel]\nfamily = table\ntable_r = 0, 1, 2\ntable_phi = 1, 0.5, 0.25\n"
      "[map]\nkind = general\nh = tanh\nq = 1\nc_r = 1\n");
  auto ker = cfg.make_kernel();
  CHECK(kernel_eval(ker, 0.5) == doctest::Approx(0.75));
  auto map = cfg.make_map();
  CHECK(phi_map(map, 0.7) == doctest::Approx(std::tanh(0.7) * 0.7));
}

TEST_CASE("csv columns round-trip bit-exactly through the reader") {
  DiagnosticSeries s;
  s.columns = {"t", "value"};
  s.append({0.0, 1.0 / 3.0});
  s.append({0.1, 6.02214076e23});
  s.append({0.2, -7.31e-15});
  std::ostringstream os;
  write_csv(os, s);
  std::istringstream is(os.str());
  DiagnosticSeries r = read_csv(is);
  REQUIRE(r.columns == s.columns);
  for (std::size_t i = 0; i < s.rows.size(); ++i)
    for (std::size_t j = 0; j < s.rows[i].size(); ++j)
      CHECK(r.rows[i][j] == s.rows[i][j]);
}

TEST_CASE("isothermal table: pinned rows and determinism") {
  ExperimentConfig cfg = parse_text(
      "[experiment]\nkind = isothermal\nout_dir = /tmp/flocklab_iso_a\n"
      "[map]\np = 4\n[isothermal]\nz_min = -1\nz_max = 1\ndz = 0.5\n");
  std::ostringstream log;
  CHECK(cmd_isothermal(cfg, log) == 0);
  cfg.out_dir = "/tmp/flocklab_iso_b";
  CHECK(cmd_isothermal(cfg, log) == 0);
  CHECK(slurp("/tmp/flocklab_iso_a/psi.csv") == slurp("/tmp/flocklab_iso_b/psi.csv"));

  std::ifstream is("/tmp/flocklab_iso_a/psi.csv");
  DiagnosticSeries t = read_csv(is);
  auto zs = t.column("z");
  auto quad = t.column("psi_quadrature");
  auto closed = t.column("psi_closed_form");
  auto err = t.column("abs_err");
  for (std::size_t i = 0; i < zs.size(); ++i) {
    CHECK(err[i] <= 1e-8);
    if (zs[i] == 0.0) {
      CHECK(quad[i] == doctest::Approx(0.0));
      CHECK(closed[i] == 0.0);
    }
    if (zs[i] == 1.0) CHECK(closed[i] == doctest::Approx(7.0));
  }
}

TEST_CASE("isothermal: p = 2 gives the identity map") {
  ExperimentConfig cfg = parse_text(
      "[experiment]\nkind = isothermal\nout_dir = /tmp/flocklab_iso_p2\n"
      "[map]\np = 2\n[isothermal]\nz_min = -1\nz_max = 1\ndz = 0.25\n");
  std::ostringstream log;
  CHECK(cmd_isothermal(cfg, log) == 0);
  std::ifstream is("/tmp/flocklab_iso_p2/psi.csv");
  DiagnosticSeries t = read_csv(is);
  auto zs = t.column("z");
  auto quad = t.column("psi_quadrature");
  for (std::size_t i = 0; i < zs.size(); ++i)
    CHECK(quad[i] == doctest::Approx(zs[i]).epsilon(1e-12));
}

TEST_CASE("isothermal: closed form rejected for fractional p") {
  CHECK_THROWS_WITH_AS(
      parse_text("[experiment]\nkind = isothermal\n[map]\np = 2.5\n"
                 "[isothermal]\nclosed_form = on\n"),
      doctest::Contains("quadrature-only"), config_error);
}

TEST_CASE("particle run artifacts are byte-identical across reruns") {
  std::string conf =
      "[experiment]\nkind = particle\nseed = 77\n"
      "[discretization]\nn_particles = 12\ndt = 0.01\n"
      "[time]\nT = 0.5\nout_dt = 0.1\n[map]\np = 3\n";
  ExperimentConfig a = parse_text(conf);
  a.out_dir = "/tmp/flocklab_pa";
  ExperimentConfig b = parse_text(conf);
  b.out_dir = "/tmp/flocklab_pb";
  std::ostringstream log;
  CHECK(cmd_run(a, true, log) == 0);
  CHECK(cmd_run(b, true, log) == 0);
  CHECK(slurp("/tmp/flocklab_pa/series.csv") == slurp("/tmp/flocklab_pb/series.csv"));
  CHECK(slurp("/tmp/flocklab_pa/final_snapshot.txt") ==
        slurp("/tmp/flocklab_pb/final_snapshot.txt"));
  // emitted CSV is re-parseable
  std::ifstream is("/tmp/flocklab_pa/series.csv");
  DiagnosticSeries s = read_csv(is);
  CHECK(s.columns.front() == "t");
  CHECK(s.rows.size() == 6);
}

TEST_CASE("kinetic run emits the energy-balance residual column") {
  std::string conf =
      "[experiment]\nkind = kinetic\n[discretization]\nnx = 32\nnv = 64\n"
      "[time]\nT = 0.2\nout_dt = 0.05\n[sweep]\nepsilon = 0.1\n[map]\np = 2.5\n";
  ExperimentConfig cfg = parse_text(conf);
  cfg.out_dir = "/tmp/flocklab_kin";
  std::ostringstream log;
  CHECK(cmd_run(cfg, true, log) == 0);
  std::ifstream is("/tmp/flocklab_kin/series.csv");
  DiagnosticSeries s = read_csv(is);
  auto res = s.column("balance_residual");
  CHECK(res.front() == 0.0);
  CHECK(std::abs(res.back()) < 1.0);
  std::ifstream snap("/tmp/flocklab_kin/final_snapshot.txt");
  PhaseDensity f = read_phase_snapshot(snap);
  CHECK(f.grid.nx == 32);
  CHECK(f.time == doctest::Approx(0.2));
}

TEST_CASE("limit sweep: artifacts, rates, and thread-count independence") {
  std::string conf =
      "[experiment]\nkind = limit_sweep\n"
      "[kernel]\nfamily = inverse_power\nalpha = 1\n[map]\np = 2.5\n"
      "[discretization]\nnx = 32\nnv = 64\nmarkers = 64\nscheme = muscl\n"
      "[domain]\nv_min = -0.2\nv_max = 0.2\n"
      "[initial]\nu_amp = 0.05\n"
      "[sweep]\nepsilons = 0.2, 0.1, 0.05\n"
      "[time]\nT = 0.2\nout_dt = 0.1\n";
  ExperimentConfig a = parse_text(conf);
  a.out_dir = "/tmp/flocklab_sw1";
  ExperimentConfig b = parse_text(conf);
  b.out_dir = "/tmp/flocklab_sw2";
  std::ostringstream log;
  CHECK(cmd_limit_sweep(a, 1, true, log) == 0);
  CHECK(cmd_limit_sweep(b, 2, true, log) == 0);
  for (const char* f : {"sweep.csv", "hydro.csv", "kinetic_eps_0p2.csv", "rates.csv"})
    CHECK(slurp(std::string("/tmp/flocklab_sw1/") + f) ==
          slurp(std::string("/tmp/flocklab_sw2/") + f));

  std::ifstream swin("/tmp/flocklab_sw1/sweep.csv");
  DiagnosticSeries sw = read_csv(swin);
  CHECK(sw.rows.size() == 3);
  CHECK(sw.column("epsilon")[0] == doctest::Approx(0.2));
  CHECK(sw.column("W1_phase_T")[0] > 0.0);

  std::ifstream rf("/tmp/flocklab_sw1/rates.csv");
  std::string header;
  std::getline(rf, header);
  CHECK(header ==
        "quantity,slope,intercept,r2,q,guaranteed_rate");
  std::string row;
  std::getline(rf, row);
  CHECK(row.substr(0, 13) == "eta_plus_w1sq");
  // q = 0.5 for p = 2.5, guaranteed rate q/(2-q) = 1/3
  CHECK(row.find("0.33333333333333331") != std::string::npos);

  std::ifstream keps("/tmp/flocklab_sw1/kinetic_eps_0p2.csv");
  DiagnosticSeries ks = read_csv(keps);
  CHECK(ks.column("eta").size() == 3);
  CHECK(ks.column("W1_rho").back() >= 0.0);
}

TEST_CASE("limit sweep at p = 2: the discrepancy columns vanish identically") {
  std::string conf =
      "[experiment]\nkind = limit_sweep\n"
      "[kernel]\nfamily = inverse_power\nalpha = 1\n[map]\np = 2\n"
      "[discretization]\nnx = 32\nnv = 64\nmarkers = 64\n"
      "[domain]\nv_min = -0.4\nv_max = 0.4\n"
      "[sweep]\nepsilons = 0.2, 0.1\n"
      "[time]\nT = 0.2\nout_dt = 0.1\n";
  ExperimentConfig cfg = parse_text(conf);
  cfg.out_dir = "/tmp/flocklab_swp2";
  std::ostringstream log;
  CHECK(cmd_limit_sweep(cfg, 1, false, log) == 0);
  for (const char* f : {"kinetic_eps_0p2.csv", "kinetic_eps_0p1.csv"}) {
    std::ifstream is(std::string("/tmp/flocklab_swp2/") + f);
    DiagnosticSeries s = read_csv(is);
    for (double d : s.column("Delta")) CHECK(d == 0.0);
    for (double g : s.column("G_norm")) CHECK(g == 0.0);
  }
}

TEST_CASE("limit sweep failures leave a partial-results manifest") {
  // T beyond the reference's strong-solution window: the hydro run exits the
  // regime and the sweep aborts before any kinetic work
  std::string conf =
      "[experiment]\nkind = limit_sweep\n"
      "[kernel]\nfamily = inverse_power\nalpha = 1\n[map]\np = 2.5\n"
      "[discretization]\nnx = 32\nnv = 64\nmarkers = 64\n"
      "[initial]\nu_amp = 0.25\n"
      "[sweep]\nepsilons = 0.2, 0.1\n"
      "[time]\nT = 2.0\nout_dt = 0.5\n";
  ExperimentConfig cfg = parse_text(conf);
  cfg.out_dir = "/tmp/flocklab_swfail";
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_limit_sweep(cfg, 1, false, log), solver_fault);

  // a per-epsilon fault (dt violating the CFL) aborts with a manifest
  std::string conf2 =
      "[experiment]\nkind = limit_sweep\n"
      "[kernel]\nfamily = inverse_power\nalpha = 1\n[map]\np = 2.5\n"
      "[discretization]\nnx = 32\nnv = 64\nmarkers = 64\ndt = 10.0\n"
      "[sweep]\nepsilons = 0.2, 0.1\n"
      "[time]\nT = 0.2\nout_dt = 0.1\n";
  ExperimentConfig cfg2 = parse_text(conf2);
  cfg2.out_dir = "/tmp/flocklab_swfail2";
  CHECK(cmd_limit_sweep(cfg2, 1, false, log) == 2);
  std::string manifest = slurp("/tmp/flocklab_swfail2/manifest.txt");
  CHECK(manifest.find("partial results") != std::string::npos);
  CHECK(manifest.find("CFL") != std::string::npos);
}

TEST_CASE("hydro run reports regime exits") {
  std::string conf =
      "[experiment]\nkind = hydro\n[kernel]\nfamily = constant\nvalue = 0\n"
      "[discretization]\nmarkers = 64\ndt = 0.001\n"
      "[time]\nT = 2.0\nout_dt = 0.1\n[map]\np = 2.5\n[tolerances]\nregime_M = 5\n";
  ExperimentConfig cfg = parse_text(conf);
  cfg.out_dir = "/tmp/flocklab_hyd";
  std::ostringstream log;
  CHECK(cmd_run(cfg, false, log) == 0);
  CHECK(log.str().find("regime_exit=1") != std::string::npos);
}

}  // TEST_SUITE
