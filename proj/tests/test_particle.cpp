#include <doctest.h>

#include <cmath>

#include "flocklab/particle.hpp"
#include "flocklab/transport.hpp"

using namespace flocklab;

namespace {

ParticleEnsemble two_body_1d(double v0, double v1) {
  ParticleEnsemble e;
  e.dim = 1;
  e.pos = {0.0, 1.0};
  e.vel = {v0, v1};
  return e;
}

double mean_velocity(const ParticleEnsemble& e, int comp = 0) {
  double s = 0.0;
  for (int i = 0; i < e.n(); ++i) s += e.vel[static_cast<std::size_t>(i) * e.dim + comp];
  return s / e.n();
}

}  // namespace

TEST_SUITE("particle") {

TEST_CASE("particle_rhs pinned values") {
  auto ones = CommunicationKernel::constant(1.0);
  auto p4 = AlignmentMap::p_power(4.0);

  ParticleEnsemble solo;
  solo.dim = 1;
  solo.pos = {0.3};
  solo.vel = {0.7};
  auto r1 = particle_rhs(solo, ones, p4);
  CHECK(r1.dvel[0] == 0.0);

  auto e = two_body_1d(0.0, 1.0);
  auto r2 = particle_rhs(e, ones, p4);
  CHECK(r2.dvel[0] == doctest::Approx(0.5));
  CHECK(r2.dvel[1] == doctest::Approx(-0.5));
  CHECK(r2.dpos[0] == doctest::Approx(0.0));
  CHECK(r2.dpos[1] == doctest::Approx(1.0));

  ParticleEnsemble flocked;
  flocked.dim = 2;
  flocked.pos = {0.0, 0.0, 1.0, 0.0, 0.0, 1.0};
  flocked.vel = {0.4, -0.2, 0.4, -0.2, 0.4, -0.2};
  auto r3 = particle_rhs(flocked, ones, p4);
  for (double d : r3.dvel) CHECK(d == 0.0);
}

TEST_CASE("two_particle_exact closed form") {
  CHECK(two_particle_exact(1.0, 4.0, 0.0) == doctest::Approx(1.0));
  CHECK(two_particle_exact(1.0, 4.0, 1.0) ==
        doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(two_particle_exact(2.0, 3.0, 1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(two_particle_exact(0.0, 4.0, 2.0) == 0.0);
}

TEST_CASE("step_rk4: flocked translation and dt = 0") {
  auto ker = CommunicationKernel::inverse_power(1.0);
  auto map = AlignmentMap::p_power(3.0);
  ParticleEnsemble e;
  e.dim = 1;
  e.pos = {0.0, 0.5, 1.2};
  e.vel = {0.3, 0.3, 0.3};
  auto next = step_rk4(e, ker, map, 0.25);
  for (int i = 0; i < 3; ++i) {
    CHECK(next.pos[static_cast<std::size_t>(i)] ==
          doctest::Approx(e.pos[static_cast<std::size_t>(i)] + 0.075).epsilon(1e-14));
    CHECK(next.vel[static_cast<std::size_t>(i)] == doctest::Approx(0.3));
  }
  auto same = step_rk4(e, ker, map, 0.0);
  CHECK(same.pos == e.pos);
  CHECK(same.vel == e.vel);
}

TEST_CASE("step_rk4 matches the two-particle oracle") {
  auto ones = CommunicationKernel::constant(1.0);
  auto p4 = AlignmentMap::p_power(4.0);
  ParticleEnsemble e = two_body_1d(-0.5, 0.5);  // velocity gap w0 = 1
  double dt = 1e-3;
  int steps = 1000;
  for (int s = 0; s < steps; ++s) e = step_rk4(e, ones, p4, dt);
  double w = std::abs(e.vel[1] - e.vel[0]);
  CHECK(std::abs(w - 0.5773502691896) <= 1e-6);
}

TEST_CASE("rk4 is 4th order against the oracle") {
  auto ones = CommunicationKernel::constant(1.0);
  for (double p : {2.5, 3.0, 4.0}) {
    auto map = AlignmentMap::p_power(p);
    auto run = [&](double dt) {
      ParticleEnsemble e = two_body_1d(-0.5, 0.5);
      int steps = static_cast<int>(std::llround(1.0 / dt));
      for (int s = 0; s < steps; ++s) e = step_rk4(e, ones, map, dt);
      return std::abs(std::abs(e.vel[1] - e.vel[0]) - two_particle_exact(1.0, p, 1.0));
    };
    double e1 = run(4e-3), e2 = run(2e-3);
    CHECK(e1 / e2 >= 12.0);
  }
}

TEST_CASE("diameters against a brute-force oracle") {
  ParticleEnsemble e;
  e.dim = 1;
  e.pos = {0.0};
  e.vel = {0.0};
  auto d1 = diameters(e);
  CHECK(d1.S == 0.0);
  CHECK(d1.V == 0.0);

  e.pos = {0.0, 3.0};
  e.vel = {0.0, 1.0};
  auto d2 = diameters(e);
  CHECK(d2.S == doctest::Approx(3.0));
  CHECK(d2.V == doctest::Approx(1.0));

  // torus wrap: particles at 0.1 and 0.9 on a unit torus are 0.2 apart
  e.period = 1.0;
  e.pos = {0.1, 0.9};
  CHECK(diameters(e).S == doctest::Approx(0.2).epsilon(1e-14));

  ParticleInit init;
  init.n = 37;
  init.dim = 2;
  init.extent = 2.0;
  init.v_spread = 1.4;
  init.seed = 1234;
  ParticleEnsemble r = sample_particles(init);
  auto d3 = diameters(r);
  double S = 0.0, V = 0.0;
  for (int i = 0; i < r.n(); ++i)
    for (int j = 0; j < r.n(); ++j) {
      double s = 0.0, v = 0.0;
      for (int c = 0; c < 2; ++c) {
        double dp = r.pos[static_cast<std::size_t>(i) * 2 + c] -
                    r.pos[static_cast<std::size_t>(j) * 2 + c];
        double dvl = r.vel[static_cast<std::size_t>(i) * 2 + c] -
                     r.vel[static_cast<std::size_t>(j) * 2 + c];
        s += dp * dp;
        v += dvl * dvl;
      }
      S = std::max(S, std::sqrt(s));
      V = std::max(V, std::sqrt(v));
    }
  CHECK(d3.S == doctest::Approx(S).epsilon(1e-14));
  CHECK(d3.V == doctest::Approx(V).epsilon(1e-14));
}

TEST_CASE("maximum principle and momentum conservation along a run") {
  auto ker = CommunicationKernel::inverse_power(0.5);
  auto map = AlignmentMap::p_power(2.5);
  ParticleInit init;
  init.n = 32;
  init.extent = 2.0;
  init.v_spread = 1.0;
  init.seed = 42;
  ParticleEnsemble e = sample_particles(init);
  double mv0 = mean_velocity(e);
  auto d0 = diameters(e);
  double Vprev = d0.V;
  double S0 = d0.S, V0 = d0.V;
  for (int s = 0; s < 1000; ++s) {
    e = step_rk4(e, ker, map, 1e-3);
    auto d = diameters(e);
    CHECK(d.V <= Vprev + 1e-6);
    CHECK(d.S <= S0 + e.time * V0 + 1e-6);
    Vprev = d.V;
  }
  CHECK(std::abs(mean_velocity(e) - mv0) <= 1e-10);
}

TEST_CASE("differential inequality for the support diameters") {
  // measured finite-difference V' must obey V' <= -2^(2-p) phi(S) V^(p-1)
  auto ker = CommunicationKernel::inverse_power(1.0);
  for (double p : {2.5, 3.0}) {
    auto map = AlignmentMap::p_power(p);
    ParticleInit init;
    init.n = 24;
    init.extent = 1.0;
    init.v_spread = 1.0;
    init.seed = 5;
    ParticleEnsemble e = sample_particles(init);
    const double dt = 1e-3;
    auto prev = diameters(e);
    double tprev = e.time;
    for (int s = 0; s < 2000; ++s) {
      e = step_rk4(e, ker, map, dt);
      auto cur = diameters(e);
      double dVdt = (cur.V - prev.V) / (e.time - tprev);
      double rhs = -std::pow(2.0, 2.0 - p) * kernel_eval(ker, cur.S) *
                   std::pow(cur.V, p - 1.0);
      double scale = std::pow(prev.V, p - 1.0) * kernel_eval(ker, 0.0);
      CHECK(dVdt <= rhs + 10.0 * dt * scale + 1e-9);
      prev = cur;
      tprev = e.time;
    }
  }
}

TEST_CASE("step_rk4 reports blow-up instead of propagating non-finite state") {
  auto ones = CommunicationKernel::constant(1.0);
  auto p4 = AlignmentMap::p_power(4.0);
  ParticleEnsemble e;
  e.dim = 1;
  e.pos = {0.0, 1.0};
  e.vel = {-1e200, 1e200};  // |z|^2 z overflows
  CHECK_THROWS_AS(step_rk4(e, ones, p4, 1e-3), solver_fault);
}

TEST_CASE("general nonlinearity h(|z|) z also flocks") {
  // h(0) = 0 makes tanh(|z|) z degenerate at consensus like the p = 3 map,
  // so the decay is algebraic rather than exponential
  auto ones = CommunicationKernel::constant(1.0);
  auto tanh_map = AlignmentMap::general([](double r) { return std::tanh(r); }, 1.0,
                                        [](double) { return 1.0; });
  ParticleInit init;
  init.n = 16;
  init.v_spread = 1.0;
  init.seed = 31;
  ParticleEnsemble e = sample_particles(init);
  double v0 = diameters(e).V;
  double mv0 = mean_velocity(e);
  double vprev = v0;
  for (int s = 0; s < 2000; ++s) {
    e = step_rk4(e, ones, tanh_map, 5e-3);
    double v = diameters(e).V;
    CHECK(v <= vprev + 1e-9);
    vprev = v;
  }
  CHECK(diameters(e).V < 0.15 * v0);
  CHECK(std::abs(mean_velocity(e) - mv0) <= 1e-10);
}

TEST_CASE("2D dynamics restricted to one axis reproduce the 1D system") {
  auto ones = CommunicationKernel::constant(1.0);
  auto map = AlignmentMap::p_power(2.5);
  ParticleEnsemble one;
  one.dim = 1;
  one.pos = {0.0, 0.7, 1.9};
  one.vel = {0.4, -0.2, 0.1};
  ParticleEnsemble two;
  two.dim = 2;
  two.pos = {0.0, 0.0, 0.7, 0.0, 1.9, 0.0};
  two.vel = {0.4, 0.0, -0.2, 0.0, 0.1, 0.0};
  for (int s = 0; s < 200; ++s) {
    one = step_rk4(one, ones, map, 5e-3);
    two = step_rk4(two, ones, map, 5e-3);
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(two.pos[static_cast<std::size_t>(i) * 2] ==
          doctest::Approx(one.pos[static_cast<std::size_t>(i)]).epsilon(1e-13));
    CHECK(two.vel[static_cast<std::size_t>(i) * 2] ==
          doctest::Approx(one.vel[static_cast<std::size_t>(i)]).epsilon(1e-13));
    CHECK(two.vel[static_cast<std::size_t>(i) * 2 + 1] == 0.0);
  }
}

TEST_CASE("run_particle: flocked data stays flocked") {
  ParticleRunConfig cfg;
  cfg.init.n = 16;
  cfg.init.v_spread = 0.0;
  cfg.init.seed = 9;
  cfg.dt = 1e-2;
  cfg.T = 2.0;
  cfg.out_dt = 0.5;
  auto res = run_particle(cfg, CommunicationKernel::constant(1.0), AlignmentMap::p_power(4.0));
  for (double v : res.series.column("V")) CHECK(v == 0.0);
}

TEST_CASE("run_particle: algebraic flocking rate for p = 3") {
  ParticleRunConfig cfg;
  cfg.init.n = 64;
  cfg.init.extent = 1.0;
  cfg.init.v_spread = 1.0;
  cfg.init.seed = 2024;
  cfg.dt = 5e-3;
  cfg.T = 100.0;
  cfg.out_dt = 0.5;
  auto res = run_particle(cfg, CommunicationKernel::constant(1.0), AlignmentMap::p_power(3.0));
  std::vector<std::pair<double, double>> pts;
  auto ts = res.series.column("t");
  auto vs = res.series.column("V");
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (ts[i] >= 10.0) pts.emplace_back(ts[i], vs[i]);
  auto fit = fit_rate(pts);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(0.1));
  CHECK(std::abs(res.series.last("mean_v") - res.series.rows.front()[3]) <= 1e-10);
}

}  // TEST_SUITE
