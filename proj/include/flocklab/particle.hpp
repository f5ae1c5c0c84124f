#pragma once

// Nonlinear Cucker-Smale particle system in d = 1, 2:
//   x_i' = v_i,   v_i' = (1/N) sum_j phi(x_i - x_j) Phi(v_j - v_i),
// with support-diameter tracking and the analytic two-particle oracle.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flocklab/align.hpp"
#include "flocklab/errors.hpp"
#include "flocklab/rng.hpp"
#include "flocklab/series.hpp"

namespace flocklab {

struct ParticleEnsemble {
  int dim = 1;                // 1 or 2
  double period = 0.0;        // 0 = free space, > 0 = torus of this period
  std::vector<double> pos;    // N * dim, interleaved
  std::vector<double> vel;    // N * dim
  double time = 0.0;

  int n() const { return static_cast<int>(pos.size()) / dim; }
};

namespace detail {

/// Minimal-image coordinate difference on the torus (identity in free space).
inline double wrap_delta(double d, double period) {
  if (period <= 0.0) return d;
  d = std::fmod(d, period);
  if (d > 0.5 * period) d -= period;
  if (d < -0.5 * period) d += period;
  return d;
}

inline double pair_distance(const ParticleEnsemble& e, int i, int j) {
  double s = 0.0;
  for (int c = 0; c < e.dim; ++c) {
    double d = wrap_delta(e.pos[static_cast<std::size_t>(i) * e.dim + c] -
                              e.pos[static_cast<std::size_t>(j) * e.dim + c],
                          e.period);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

struct ParticleRhs {
  std::vector<double> dpos;
  std::vector<double> dvel;
};

/// Pairwise alignment forces. The i < j loop applies exactly opposite
/// contributions to both partners, so the mean velocity is conserved to
/// rounding by construction.
inline ParticleRhs particle_rhs(const ParticleEnsemble& ens,
                                const CommunicationKernel& kernel,
                                const AlignmentMap& map) {
  const int n = ens.n();
  const int d = ens.dim;
  if (n < 1) throw std::domain_error("particle_rhs: empty ensemble");
  ParticleRhs rhs;
  rhs.dpos = ens.vel;
  rhs.dvel.assign(ens.vel.size(), 0.0);
  const double invn = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double w = invn * kernel_eval(kernel, detail::pair_distance(ens, i, j));
      if (d == 1) {
        double f = w * phi_map(map, ens.vel[static_cast<std::size_t>(j)] -
                                        ens.vel[static_cast<std::size_t>(i)]);
        rhs.dvel[static_cast<std::size_t>(i)] += f;
        rhs.dvel[static_cast<std::size_t>(j)] -= f;
      } else {
        std::array<double, 2> dz = {
            ens.vel[static_cast<std::size_t>(j) * 2] - ens.vel[static_cast<std::size_t>(i) * 2],
            ens.vel[static_cast<std::size_t>(j) * 2 + 1] -
                ens.vel[static_cast<std::size_t>(i) * 2 + 1]};
        auto f = phi_map(map, dz);
        rhs.dvel[static_cast<std::size_t>(i) * 2] += w * f[0];
        rhs.dvel[static_cast<std::size_t>(i) * 2 + 1] += w * f[1];
        rhs.dvel[static_cast<std::size_t>(j) * 2] -= w * f[0];
        rhs.dvel[static_cast<std::size_t>(j) * 2 + 1] -= w * f[1];
      }
    }
  }
  return rhs;
}

/// Classical RK4 step. The alignment force is bounded on bounded velocity
/// supports, so no stiffness handling is needed at the particle level.
inline ParticleEnsemble step_rk4(const ParticleEnsemble& ens,
                                 const CommunicationKernel& kernel,
                                 const AlignmentMap& map, double dt) {
  if (dt < 0.0) throw std::domain_error("step_rk4: dt must be >= 0");
  auto advance = [&](const ParticleEnsemble& base, const ParticleRhs& k, double h) {
    ParticleEnsemble out = base;
    for (std::size_t a = 0; a < out.pos.size(); ++a) {
      out.pos[a] += h * k.dpos[a];
      out.vel[a] += h * k.dvel[a];
    }
    return out;
  };
  ParticleRhs k1 = particle_rhs(ens, kernel, map);
  ParticleEnsemble s2 = advance(ens, k1, 0.5 * dt);
  ParticleRhs k2 = particle_rhs(s2, kernel, map);
  ParticleEnsemble s3 = advance(ens, k2, 0.5 * dt);
  ParticleRhs k3 = particle_rhs(s3, kernel, map);
  ParticleEnsemble s4 = advance(ens, k3, dt);
  ParticleRhs k4 = particle_rhs(s4, kernel, map);

  ParticleEnsemble out = ens;
  const double h6 = dt / 6.0;
  for (std::size_t a = 0; a < out.pos.size(); ++a) {
    out.pos[a] += h6 * (k1.dpos[a] + 2.0 * k2.dpos[a] + 2.0 * k3.dpos[a] + k4.dpos[a]);
    out.vel[a] += h6 * (k1.dvel[a] + 2.0 * k2.dvel[a] + 2.0 * k3.dvel[a] + k4.dvel[a]);
  }
  out.time = ens.time + dt;
  for (std::size_t a = 0; a < out.pos.size(); ++a) {
    if (!std::isfinite(out.pos[a]) || !std::isfinite(out.vel[a]))
      throw solver_fault("step_rk4: non-finite state after step at t = " +
                         std::to_string(out.time));
  }
  return out;
}

/// Closed-form velocity gap of the symmetric two-particle system with
/// phi == 1: |w|' = -|w|^(p-1), so
///   |w|(t) = (w0^(-(p-2)) + (p-2) t)^(-1/(p-2)).
inline double two_particle_exact(double w0, double p, double t) {
  if (w0 < 0.0) throw std::domain_error("two_particle_exact: w0 must be >= 0");
  if (!(p > 2.0)) throw std::domain_error("two_particle_exact: needs p > 2");
  if (w0 == 0.0) return 0.0;
  return std::pow(std::pow(w0, -(p - 2.0)) + (p - 2.0) * t, -1.0 / (p - 2.0));
}

struct Diameters {
  double S;  ///< max pairwise position distance (torus metric if periodic)
  double V;  ///< max pairwise velocity distance
};

inline Diameters diameters(const ParticleEnsemble& ens) {
  const int n = ens.n();
  if (n < 1) throw std::domain_error("diameters: empty ensemble");
  double s = 0.0, v = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      s = std::max(s, detail::pair_distance(ens, i, j));
      double vv = 0.0;
      for (int c = 0; c < ens.dim; ++c) {
        double d = ens.vel[static_cast<std::size_t>(i) * ens.dim + c] -
                   ens.vel[static_cast<std::size_t>(j) * ens.dim + c];
        vv += d * d;
      }
      v = std::max(v, std::sqrt(vv));
    }
  }
  return {s, v};
}

// ---------------------------------------------------------------------------
// Seeded initial samplers: deterministic lattice plus uniform perturbation,
// so fitted decay exponents are reproducible run to run.
// ---------------------------------------------------------------------------

struct ParticleInit {
  int n = 64;
  int dim = 1;
  double period = 0.0;     // 0 = free space
  double extent = 1.0;     // lattice spans [0, extent) per coordinate
  double jitter = 0.25;    // position perturbation, fraction of lattice spacing
  double v_spread = 1.0;   // velocities uniform in [-v_spread/2, v_spread/2]
  std::uint64_t seed = 1;
};

inline ParticleEnsemble sample_particles(const ParticleInit& init) {
  if (init.n < 1) throw std::domain_error("sample_particles: n must be >= 1");
  if (init.dim != 1 && init.dim != 2)
    throw std::domain_error("sample_particles: dim must be 1 or 2");
  ParticleEnsemble e;
  e.dim = init.dim;
  e.period = init.period;
  e.time = 0.0;
  e.pos.resize(static_cast<std::size_t>(init.n) * init.dim);
  e.vel.resize(static_cast<std::size_t>(init.n) * init.dim);
  Rng rng(init.seed);
  if (init.dim == 1) {
    double h = init.extent / init.n;
    for (int i = 0; i < init.n; ++i)
      e.pos[static_cast<std::size_t>(i)] =
          (i + 0.5) * h + init.jitter * h * (rng.uniform() - 0.5);
  } else {
    int side = 1;
    while (side * side < init.n) ++side;
    double h = init.extent / side;
    for (int i = 0; i < init.n; ++i) {
      int ix = i % side, iy = i / side;
      e.pos[static_cast<std::size_t>(i) * 2] =
          (ix + 0.5) * h + init.jitter * h * (rng.uniform() - 0.5);
      e.pos[static_cast<std::size_t>(i) * 2 + 1] =
          (iy + 0.5) * h + init.jitter * h * (rng.uniform() - 0.5);
    }
  }
  for (double& v : e.vel) v = init.v_spread * (rng.uniform() - 0.5);
  return e;
}

// ---------------------------------------------------------------------------
// Configured runs
// ---------------------------------------------------------------------------

struct ParticleRunConfig {
  ParticleInit init;
  double dt = 1e-2;
  double T = 10.0;
  double out_dt = 0.1;
};

struct ParticleRunResult {
  DiagnosticSeries series;
  ParticleEnsemble final_state;
};

/// Integrate to T, recording support diameters, mean velocity and kinetic
/// energy at each output time. Deterministic for a fixed seed.
inline ParticleRunResult run_particle(const ParticleRunConfig& cfg,
                                      const CommunicationKernel& kernel,
                                      const AlignmentMap& map) {
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("run_particle: dt must be > 0");
  if (!(cfg.T >= 0.0) || !(cfg.out_dt > 0.0))
    throw std::invalid_argument("run_particle: invalid time horizon");
  ParticleEnsemble e = sample_particles(cfg.init);
  ParticleRunResult out;
  if (e.dim == 1)
    out.series.columns = {"t", "S", "V", "mean_v", "kinetic"};
  else
    out.series.columns = {"t", "S", "V", "mean_vx", "mean_vy", "kinetic"};

  auto record = [&](const ParticleEnsemble& st) {
    Diameters d = diameters(st);
    const int n = st.n();
    double kin = 0.0;
    std::vector<double> mv(static_cast<std::size_t>(st.dim), 0.0);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < st.dim; ++c) {
        double v = st.vel[static_cast<std::size_t>(i) * st.dim + c];
        mv[static_cast<std::size_t>(c)] += v;
        kin += v * v;
      }
    for (double& v : mv) v /= n;
    kin = 0.5 * kin / n;
    std::vector<double> row = {st.time, d.S, d.V};
    for (double v : mv) row.push_back(v);
    row.push_back(kin);
    out.series.append(row);
  };

  record(e);
  const double eps_t = 1e-12 * std::max(1.0, cfg.T);
  double next_out = cfg.out_dt;
  while (e.time < cfg.T - eps_t) {
    double target = std::min(next_out, cfg.T);
    double dt = std::min(cfg.dt, target - e.time);
    e = step_rk4(e, kernel, map, dt);
    if (e.time >= target - eps_t) {
      record(e);
      if (target >= cfg.T - eps_t) break;
      next_out = std::min(next_out + cfg.out_dt, cfg.T);
    }
  }
  out.final_state = std::move(e);
  return out;
}

}  // namespace flocklab
