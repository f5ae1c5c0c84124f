#pragma once

// 1D pressureless Euler-alignment system on the torus,
//   rho_t + (rho u)_x = 0,   u_t + u u_x = A[rho, u],
// solved by a Lagrangian flow-map scheme (markers follow characteristics and
// the density is the push-forward of the initial measure) with an independent
// Eulerian finite-volume cross-check. A Lipschitz monitor polices the
// strong-solution regime; runs stop with a regime report instead of
// continuing past gradient blow-up.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flocklab/align.hpp"
#include "flocklab/errors.hpp"
#include "flocklab/numeric.hpp"
#include "flocklab/series.hpp"

namespace flocklab {

enum class HydroRepr { lagrangian, eulerian };
enum class FluxScheme { upwind, muscl };

struct HydroState {
  HydroRepr representation = HydroRepr::lagrangian;
  double L = 1.0;
  double time = 0.0;

  // Lagrangian markers, strictly ordered: X[0] < X[1] < ... < X[0] + L.
  // Positions are kept unwrapped so ordering checks are plain comparisons.
  std::vector<double> X, u, m;

  // Eulerian cell averages (mom = rho * u).
  std::vector<double> rho, mom;

  int size() const {
    return representation == HydroRepr::lagrangian ? static_cast<int>(X.size())
                                                   : static_cast<int>(rho.size());
  }
};

namespace detail {

inline double cell_velocity(double rho, double mom, double vacuum_threshold) {
  return rho >= vacuum_threshold ? mom / rho : 0.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Initial data
// ---------------------------------------------------------------------------

/// Equispaced markers carrying the initial measure: m_i = rho0(X_i)/sum.
inline HydroState lagrangian_from_profile(const std::function<double(double)>& rho0,
                                          const std::function<double(double)>& u0,
                                          int markers, double L) {
  if (markers < 4) throw std::domain_error("lagrangian_from_profile: need >= 4 markers");
  HydroState s;
  s.representation = HydroRepr::lagrangian;
  s.L = L;
  s.X.resize(static_cast<std::size_t>(markers));
  s.u.resize(static_cast<std::size_t>(markers));
  s.m.resize(static_cast<std::size_t>(markers));
  double h = L / markers;
  double total = 0.0;
  for (int i = 0; i < markers; ++i) {
    double x = (i + 0.5) * h;
    s.X[static_cast<std::size_t>(i)] = x;
    s.u[static_cast<std::size_t>(i)] = u0(x);
    double w = rho0(x);
    if (w < 0.0) throw std::domain_error("lagrangian_from_profile: rho0 < 0");
    s.m[static_cast<std::size_t>(i)] = w;
    total += w;
  }
  for (double& w : s.m) w /= total;
  return s;
}

inline HydroState eulerian_from_profile(const std::function<double(double)>& rho0,
                                        const std::function<double(double)>& u0,
                                        int nx, double L) {
  if (nx < 4) throw std::domain_error("eulerian_from_profile: need >= 4 cells");
  HydroState s;
  s.representation = HydroRepr::eulerian;
  s.L = L;
  s.rho.resize(static_cast<std::size_t>(nx));
  s.mom.resize(static_cast<std::size_t>(nx));
  double dx = L / nx;
  double total = 0.0;
  for (int i = 0; i < nx; ++i) {
    double x = (i + 0.5) * dx;
    double r = rho0(x);
    if (r < 0.0) throw std::domain_error("eulerian_from_profile: rho0 < 0");
    s.rho[static_cast<std::size_t>(i)] = r;
    total += r * dx;
  }
  for (int i = 0; i < nx; ++i) {
    s.rho[static_cast<std::size_t>(i)] /= total;
    s.mom[static_cast<std::size_t>(i)] =
        s.rho[static_cast<std::size_t>(i)] * u0((i + 0.5) * dx);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Alignment acceleration A[rho, u](x) = int phi(x-y) Phi(u(y)-u(x)) rho(y) dy
// ---------------------------------------------------------------------------

/// Lagrangian quadrature uses the push-forward change of variables, so the
/// weights are the (constant-in-time) marker masses. The i < j pair loop
/// keeps the pairwise exchanges exactly antisymmetric.
inline std::vector<double> alignment_accel(const HydroState& s,
                                           const CommunicationKernel& kernel,
                                           const AlignmentMap& map,
                                           double vacuum_threshold = 1e-12) {
  const int n = s.size();
  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  if (s.representation == HydroRepr::lagrangian) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double w = kernel_eval(kernel, detail::torus_dist(s.X[static_cast<std::size_t>(i)],
                                                          s.X[static_cast<std::size_t>(j)], s.L));
        double f = w * phi_map(map, s.u[static_cast<std::size_t>(j)] -
                                        s.u[static_cast<std::size_t>(i)]);
        acc[static_cast<std::size_t>(i)] += f * s.m[static_cast<std::size_t>(j)];
        acc[static_cast<std::size_t>(j)] -= f * s.m[static_cast<std::size_t>(i)];
      }
    }
  } else {
    const double dx = s.L / n;
    std::vector<double> u(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      u[static_cast<std::size_t>(i)] = detail::cell_velocity(
          s.rho[static_cast<std::size_t>(i)], s.mom[static_cast<std::size_t>(i)],
          vacuum_threshold);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double r = dx * std::min(j - i, n - (j - i));
        double w = kernel_eval(kernel, r);
        double f = w * phi_map(map, u[static_cast<std::size_t>(j)] -
                                        u[static_cast<std::size_t>(i)]);
        acc[static_cast<std::size_t>(i)] += f * s.rho[static_cast<std::size_t>(j)] * dx;
        acc[static_cast<std::size_t>(j)] -= f * s.rho[static_cast<std::size_t>(i)] * dx;
      }
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Lagrangian step
// ---------------------------------------------------------------------------

/// Density reconstructed from the symmetric marker spacing; only meaningful
/// while markers stay ordered.
inline std::vector<double> lagrangian_density(const HydroState& s) {
  const int n = static_cast<int>(s.X.size());
  std::vector<double> rho(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double xp = (i + 1 < n) ? s.X[static_cast<std::size_t>(i) + 1]
                            : s.X[0] + s.L;
    double xm = (i > 0) ? s.X[static_cast<std::size_t>(i) - 1]
                        : s.X[static_cast<std::size_t>(n) - 1] - s.L;
    double gap = 0.5 * (xp - xm);
    rho[static_cast<std::size_t>(i)] = s.m[static_cast<std::size_t>(i)] / gap;
  }
  return rho;
}

/// RK4 update of the flow map (X_i' = u_i, u_i' = A_i). Throws
/// characteristic_crossing as soon as the marker ordering breaks, which is
/// the discrete signature of leaving the strong-solution regime.
inline HydroState lagrangian_step(const HydroState& s,
                                  const CommunicationKernel& kernel,
                                  const AlignmentMap& map, double dt) {
  if (s.representation != HydroRepr::lagrangian)
    throw std::invalid_argument("lagrangian_step: state is not lagrangian");
  if (!(dt >= 0.0)) throw std::domain_error("lagrangian_step: dt must be >= 0");
  const int n = static_cast<int>(s.X.size());

  auto advance = [&](const HydroState& base, const std::vector<double>& du,
                     const std::vector<double>& dX, double h) {
    HydroState out = base;
    for (int i = 0; i < n; ++i) {
      out.X[static_cast<std::size_t>(i)] += h * dX[static_cast<std::size_t>(i)];
      out.u[static_cast<std::size_t>(i)] += h * du[static_cast<std::size_t>(i)];
    }
    return out;
  };

  std::vector<double> a1 = alignment_accel(s, kernel, map);
  HydroState s2 = advance(s, a1, s.u, 0.5 * dt);
  std::vector<double> a2 = alignment_accel(s2, kernel, map);
  HydroState s3 = advance(s, a2, s2.u, 0.5 * dt);
  std::vector<double> a3 = alignment_accel(s3, kernel, map);
  HydroState s4 = advance(s, a3, s3.u, dt);
  std::vector<double> a4 = alignment_accel(s4, kernel, map);

  HydroState out = s;
  const double h6 = dt / 6.0;
  for (int i = 0; i < n; ++i) {
    std::size_t k = static_cast<std::size_t>(i);
    out.X[k] += h6 * (s.u[k] + 2.0 * s2.u[k] + 2.0 * s3.u[k] + s4.u[k]);
    out.u[k] += h6 * (a1[k] + 2.0 * a2[k] + 2.0 * a3[k] + a4[k]);
  }
  out.time = s.time + dt;

  for (int i = 0; i < n; ++i) {
    double next = (i + 1 < n) ? out.X[static_cast<std::size_t>(i) + 1]
                              : out.X[0] + out.L;
    if (!(next - out.X[static_cast<std::size_t>(i)] > 0.0))
      throw characteristic_crossing(
          "lagrangian_step: markers crossed at t = " + std::to_string(out.time),
          out.time);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Eulerian step
// ---------------------------------------------------------------------------

struct EulerianOptions {
  FluxScheme scheme = FluxScheme::upwind;
  double cfl = 0.9;
  double vacuum_threshold = 1e-12;
};

namespace detail {

/// Semi-discrete RHS: Rusanov fluxes (optionally with minmod-limited MUSCL
/// reconstruction of the primitive variables) plus the alignment source.
inline void eulerian_rhs(const HydroState& s, const CommunicationKernel& kernel,
                         const AlignmentMap& map, const EulerianOptions& opt,
                         std::vector<double>& drho, std::vector<double>& dmom) {
  const int n = static_cast<int>(s.rho.size());
  const double dx = s.L / n;
  std::vector<double> u(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    u[static_cast<std::size_t>(i)] =
        cell_velocity(s.rho[static_cast<std::size_t>(i)],
                      s.mom[static_cast<std::size_t>(i)], opt.vacuum_threshold);

  std::vector<double> rl(static_cast<std::size_t>(n)), rr(static_cast<std::size_t>(n));
  std::vector<double> ul(static_cast<std::size_t>(n)), ur(static_cast<std::size_t>(n));
  if (opt.scheme == FluxScheme::muscl) {
    for (int i = 0; i < n; ++i) {
      int im = (i + n - 1) % n, ip = (i + 1) % n;
      double sr = minmod(s.rho[static_cast<std::size_t>(i)] - s.rho[static_cast<std::size_t>(im)],
                         s.rho[static_cast<std::size_t>(ip)] - s.rho[static_cast<std::size_t>(i)]);
      double su = minmod(u[static_cast<std::size_t>(i)] - u[static_cast<std::size_t>(im)],
                         u[static_cast<std::size_t>(ip)] - u[static_cast<std::size_t>(i)]);
      rl[static_cast<std::size_t>(i)] = s.rho[static_cast<std::size_t>(i)] - 0.5 * sr;
      rr[static_cast<std::size_t>(i)] = s.rho[static_cast<std::size_t>(i)] + 0.5 * sr;
      ul[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i)] - 0.5 * su;
      ur[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i)] + 0.5 * su;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      rl[static_cast<std::size_t>(i)] = rr[static_cast<std::size_t>(i)] =
          s.rho[static_cast<std::size_t>(i)];
      ul[static_cast<std::size_t>(i)] = ur[static_cast<std::size_t>(i)] =
          u[static_cast<std::size_t>(i)];
    }
  }

  // Rusanov flux through face i+1/2 for U = (rho, rho u), F = (rho u, rho u^2)
  std::vector<double> f1(static_cast<std::size_t>(n)), f2(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int ip = (i + 1) % n;
    double rL = rr[static_cast<std::size_t>(i)], uL = ur[static_cast<std::size_t>(i)];
    double rR = rl[static_cast<std::size_t>(ip)], uR = ul[static_cast<std::size_t>(ip)];
    double a = std::max(std::abs(uL), std::abs(uR));
    f1[static_cast<std::size_t>(i)] =
        0.5 * (rL * uL + rR * uR) - 0.5 * a * (rR - rL);
    f2[static_cast<std::size_t>(i)] =
        0.5 * (rL * uL * uL + rR * uR * uR) - 0.5 * a * (rR * uR - rL * uL);
  }

  std::vector<double> acc = alignment_accel(s, kernel, map, opt.vacuum_threshold);
  drho.assign(static_cast<std::size_t>(n), 0.0);
  dmom.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    int im = (i + n - 1) % n;
    drho[static_cast<std::size_t>(i)] =
        -(f1[static_cast<std::size_t>(i)] - f1[static_cast<std::size_t>(im)]) / dx;
    dmom[static_cast<std::size_t>(i)] =
        -(f2[static_cast<std::size_t>(i)] - f2[static_cast<std::size_t>(im)]) / dx +
        s.rho[static_cast<std::size_t>(i)] * acc[static_cast<std::size_t>(i)];
  }
}

}  // namespace detail

/// One finite-volume step. Forward Euler for the first-order scheme, Heun
/// for MUSCL. Mass is conserved exactly by the flux form.
inline HydroState eulerian_step(const HydroState& s, const CommunicationKernel& kernel,
                                const AlignmentMap& map, double dt,
                                const EulerianOptions& opt = {}) {
  if (s.representation != HydroRepr::eulerian)
    throw std::invalid_argument("eulerian_step: state is not eulerian");
  const int n = static_cast<int>(s.rho.size());
  const double dx = s.L / n;
  double umax = 0.0;
  for (int i = 0; i < n; ++i)
    umax = std::max(umax, std::abs(detail::cell_velocity(
                              s.rho[static_cast<std::size_t>(i)],
                              s.mom[static_cast<std::size_t>(i)], opt.vacuum_threshold)));
  if (dt * umax / dx > opt.cfl + 1e-12)
    throw cfl_violation("eulerian_step: dt * max|u| / dx = " +
                        std::to_string(dt * umax / dx) + " exceeds CFL limit " +
                        std::to_string(opt.cfl));

  std::vector<double> dr1, dm1;
  detail::eulerian_rhs(s, kernel, map, opt, dr1, dm1);
  HydroState out = s;
  for (int i = 0; i < n; ++i) {
    out.rho[static_cast<std::size_t>(i)] += dt * dr1[static_cast<std::size_t>(i)];
    out.mom[static_cast<std::size_t>(i)] += dt * dm1[static_cast<std::size_t>(i)];
  }
  if (opt.scheme == FluxScheme::muscl) {
    out.time = s.time + dt;
    std::vector<double> dr2, dm2;
    detail::eulerian_rhs(out, kernel, map, opt, dr2, dm2);
    for (int i = 0; i < n; ++i) {
      std::size_t k = static_cast<std::size_t>(i);
      out.rho[k] = 0.5 * (s.rho[k] + out.rho[k] + dt * dr2[k]);
      out.mom[k] = 0.5 * (s.mom[k] + out.mom[k] + dt * dm2[k]);
    }
  }
  out.time = s.time + dt;
  for (int i = 0; i < n; ++i)
    if (out.rho[static_cast<std::size_t>(i)] < 0.0)
      throw solver_fault("eulerian_step: negative density at t = " +
                         std::to_string(out.time));
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Finite-difference sup of |d_x u| over consecutive markers/cells.
inline double lipschitz_monitor(const HydroState& s, double vacuum_threshold = 1e-12) {
  const int n = s.size();
  double lip = 0.0;
  if (s.representation == HydroRepr::lagrangian) {
    for (int i = 0; i < n; ++i) {
      int ip = (i + 1) % n;
      double gap = (ip == 0) ? s.X[0] + s.L - s.X[static_cast<std::size_t>(i)]
                             : s.X[static_cast<std::size_t>(ip)] - s.X[static_cast<std::size_t>(i)];
      if (gap > 0.0)
        lip = std::max(lip, std::abs(s.u[static_cast<std::size_t>(ip)] -
                                     s.u[static_cast<std::size_t>(i)]) /
                                gap);
    }
  } else {
    const double dx = s.L / n;
    for (int i = 0; i < n; ++i) {
      int ip = (i + 1) % n;
      double ui = detail::cell_velocity(s.rho[static_cast<std::size_t>(i)],
                                        s.mom[static_cast<std::size_t>(i)], vacuum_threshold);
      double up = detail::cell_velocity(s.rho[static_cast<std::size_t>(ip)],
                                        s.mom[static_cast<std::size_t>(ip)], vacuum_threshold);
      lip = std::max(lip, std::abs(up - ui) / dx);
    }
  }
  return lip;
}

struct HydroScalars {
  double mass;
  double momentum;
  double energy;       ///< (1/2) int rho |u|^2
  double u_min, u_max;
};

inline HydroScalars hydro_scalars(const HydroState& s, double vacuum_threshold = 1e-12) {
  HydroScalars out{0.0, 0.0, 0.0, 0.0, 0.0};
  const int n = s.size();
  bool first = true;
  if (s.representation == HydroRepr::lagrangian) {
    for (int i = 0; i < n; ++i) {
      std::size_t k = static_cast<std::size_t>(i);
      out.mass += s.m[k];
      out.momentum += s.m[k] * s.u[k];
      out.energy += 0.5 * s.m[k] * s.u[k] * s.u[k];
      if (first || s.u[k] < out.u_min) out.u_min = s.u[k];
      if (first || s.u[k] > out.u_max) out.u_max = s.u[k];
      first = false;
    }
  } else {
    const double dx = s.L / n;
    for (int i = 0; i < n; ++i) {
      std::size_t k = static_cast<std::size_t>(i);
      double u = detail::cell_velocity(s.rho[k], s.mom[k], vacuum_threshold);
      out.mass += s.rho[k] * dx;
      out.momentum += s.mom[k] * dx;
      out.energy += 0.5 * s.rho[k] * u * u * dx;
      if (s.rho[k] >= vacuum_threshold) {
        if (first || u < out.u_min) out.u_min = u;
        if (first || u > out.u_max) out.u_max = u;
        first = false;
      }
    }
  }
  return out;
}

/// Velocity sampled at the nx periodic cell centers of a kinetic grid,
/// linear interpolation. For an Eulerian state on the same grid the values
/// are taken directly; interpolation must be requested explicitly.
inline std::vector<double> hydro_velocity_on_grid(const HydroState& s, int nx, double L,
                                                  bool interpolate = true,
                                                  double vacuum_threshold = 1e-12) {
  if (std::abs(L - s.L) > 1e-12 * std::max(1.0, L))
    throw std::invalid_argument("hydro_velocity_on_grid: domain length mismatch");
  std::vector<double> out(static_cast<std::size_t>(nx));
  const double dx = L / nx;
  if (s.representation == HydroRepr::eulerian) {
    const int n = static_cast<int>(s.rho.size());
    if (n == nx) {
      for (int i = 0; i < nx; ++i)
        out[static_cast<std::size_t>(i)] =
            detail::cell_velocity(s.rho[static_cast<std::size_t>(i)],
                                  s.mom[static_cast<std::size_t>(i)], vacuum_threshold);
      return out;
    }
    if (!interpolate)
      throw std::invalid_argument(
          "hydro_velocity_on_grid: grid mismatch without interpolation flag");
    const double hdx = L / n;
    for (int i = 0; i < nx; ++i) {
      double x = (i + 0.5) * dx;
      double t = x / hdx - 0.5;
      int j0 = static_cast<int>(std::floor(t));
      double w = t - j0;
      int a = ((j0 % n) + n) % n, b = (a + 1) % n;
      double ua = detail::cell_velocity(s.rho[static_cast<std::size_t>(a)],
                                        s.mom[static_cast<std::size_t>(a)], vacuum_threshold);
      double ub = detail::cell_velocity(s.rho[static_cast<std::size_t>(b)],
                                        s.mom[static_cast<std::size_t>(b)], vacuum_threshold);
      out[static_cast<std::size_t>(i)] = (1.0 - w) * ua + w * ub;
    }
    return out;
  }
  if (!interpolate)
    throw std::invalid_argument(
        "hydro_velocity_on_grid: lagrangian state needs the interpolation flag");
  const int n = static_cast<int>(s.X.size());
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::fmod(s.X[static_cast<std::size_t>(i)], L);
    if (x < 0.0) x += L;
    pts.emplace_back(x, s.u[static_cast<std::size_t>(i)]);
  }
  std::sort(pts.begin(), pts.end());
  for (int i = 0; i < nx; ++i) {
    double x = (i + 0.5) * dx;
    auto it = std::upper_bound(pts.begin(), pts.end(), std::make_pair(x, 1e308));
    std::size_t hi = (it == pts.end()) ? 0 : static_cast<std::size_t>(it - pts.begin());
    std::size_t lo = (hi == 0) ? pts.size() - 1 : hi - 1;
    double x0 = pts[lo].first, x1 = pts[hi].first;
    double span = x1 - x0;
    if (span <= 0.0) span += L;
    double d = x - x0;
    if (d < 0.0) d += L;
    double w = (span > 0.0) ? d / span : 0.0;
    out[static_cast<std::size_t>(i)] = (1.0 - w) * pts[lo].second + w * pts[hi].second;
  }
  return out;
}

/// Marker masses deposited onto nx periodic cells with two-point linear
/// weights. Comparing this against a kinetic density on the same grid
/// removes the atomization mismatch between point markers and cell averages.
inline std::vector<double> hydro_density_on_grid(const HydroState& s, int nx, double L) {
  if (std::abs(L - s.L) > 1e-12 * std::max(1.0, L))
    throw std::invalid_argument("hydro_density_on_grid: domain length mismatch");
  std::vector<double> rho(static_cast<std::size_t>(nx), 0.0);
  const double dx = L / nx;
  if (s.representation == HydroRepr::eulerian) {
    const int n = static_cast<int>(s.rho.size());
    if (n == nx) return s.rho;
    for (int i = 0; i < n; ++i) {
      double x = (i + 0.5) * (L / n);
      double t = x / dx - 0.5;
      int k = static_cast<int>(std::floor(t));
      double w = t - k;
      int a = ((k % nx) + nx) % nx, b = (a + 1) % nx;
      double mass = s.rho[static_cast<std::size_t>(i)] * (L / n);
      rho[static_cast<std::size_t>(a)] += mass * (1.0 - w) / dx;
      rho[static_cast<std::size_t>(b)] += mass * w / dx;
    }
    return rho;
  }
  for (std::size_t i = 0; i < s.X.size(); ++i) {
    double x = std::fmod(s.X[i], L);
    if (x < 0.0) x += L;
    double t = x / dx - 0.5;
    int k = static_cast<int>(std::floor(t));
    double w = t - k;
    int a = ((k % nx) + nx) % nx, b = (a + 1) % nx;
    rho[static_cast<std::size_t>(a)] += s.m[i] * (1.0 - w) / dx;
    rho[static_cast<std::size_t>(b)] += s.m[i] * w / dx;
  }
  return rho;
}

// ---------------------------------------------------------------------------
// Snapshot text format:  header "representation n time", then one row per
// marker "X u m" or per cell "x rho u", full decimal precision.
// ---------------------------------------------------------------------------

inline void write_hydro_snapshot(std::ostream& os, const HydroState& s,
                                 double vacuum_threshold = 1e-12) {
  const int n = s.size();
  os << (s.representation == HydroRepr::lagrangian ? "lagrangian" : "eulerian") << ' '
     << n << ' ' << format_full(s.time) << '\n';
  if (s.representation == HydroRepr::lagrangian) {
    for (int i = 0; i < n; ++i) {
      std::size_t k = static_cast<std::size_t>(i);
      os << format_full(s.X[k]) << ' ' << format_full(s.u[k]) << ' '
         << format_full(s.m[k]) << '\n';
    }
  } else {
    const double dx = s.L / n;
    for (int i = 0; i < n; ++i) {
      std::size_t k = static_cast<std::size_t>(i);
      os << format_full((i + 0.5) * dx) << ' ' << format_full(s.rho[k]) << ' '
         << format_full(detail::cell_velocity(s.rho[k], s.mom[k], vacuum_threshold))
         << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Configured runs
// ---------------------------------------------------------------------------

struct HydroRunConfig {
  HydroRepr representation = HydroRepr::lagrangian;
  int n = 256;               ///< markers (lagrangian) or cells (eulerian)
  double L = 1.0;
  double dt = 1e-3;          ///< lagrangian step; eulerian uses CFL when <= 0
  double T = 1.0;
  double out_dt = 0.02;
  double cfl = 0.9;
  FluxScheme scheme = FluxScheme::upwind;
  double regime_M = 20.0;    ///< Lipschitz continuation bound
  double vacuum_threshold = 1e-12;
  std::function<double(double)> rho0;
  std::function<double(double)> u0;
  bool keep_snapshots = true;
};

struct HydroRunResult {
  DiagnosticSeries series;
  std::vector<HydroState> snapshots;  ///< one per recorded output time
  bool regime_exit = false;
  double regime_time = 0.0;
  std::string regime_reason;
};

inline HydroRunResult run_hydro(const HydroRunConfig& cfg,
                                const CommunicationKernel& kernel,
                                const AlignmentMap& map) {
  if (!cfg.rho0 || !cfg.u0) throw std::invalid_argument("run_hydro: missing initial profile");
  if (!(cfg.T >= 0.0) || !(cfg.out_dt > 0.0))
    throw std::invalid_argument("run_hydro: invalid time horizon");
  HydroState s = (cfg.representation == HydroRepr::lagrangian)
                     ? lagrangian_from_profile(cfg.rho0, cfg.u0, cfg.n, cfg.L)
                     : eulerian_from_profile(cfg.rho0, cfg.u0, cfg.n, cfg.L);
  HydroRunResult out;
  out.series.columns = {"t", "mass", "momentum", "energy", "lip_u", "V"};

  auto record = [&](const HydroState& st) {
    HydroScalars sc = hydro_scalars(st, cfg.vacuum_threshold);
    out.series.append({st.time, sc.mass, sc.momentum, sc.energy,
                       lipschitz_monitor(st, cfg.vacuum_threshold), sc.u_max - sc.u_min});
    if (cfg.keep_snapshots) out.snapshots.push_back(st);
  };

  record(s);
  double lip0 = lipschitz_monitor(s, cfg.vacuum_threshold);
  if (lip0 > cfg.regime_M) {
    out.regime_exit = true;
    out.regime_time = 0.0;
    out.regime_reason = "lipschitz monitor above M at t = 0";
    return out;
  }

  const double eps_t = 1e-12 * std::max(1.0, cfg.T);
  double next_out = cfg.out_dt;
  while (s.time < cfg.T - eps_t) {
    double target = std::min(next_out, cfg.T);
    double dt;
    if (cfg.representation == HydroRepr::lagrangian) {
      dt = cfg.dt > 0.0 ? cfg.dt : 1e-3;
    } else {
      HydroScalars sc = hydro_scalars(s, cfg.vacuum_threshold);
      double umax = std::max(std::abs(sc.u_min), std::abs(sc.u_max));
      double dx = cfg.L / cfg.n;
      double dt_cfl = (umax > 0.0) ? cfg.cfl * dx / umax : cfg.out_dt;
      if (cfg.scheme == FluxScheme::muscl) dt_cfl *= 0.5;
      dt = (cfg.dt > 0.0) ? cfg.dt : dt_cfl;
    }
    dt = std::min(dt, target - s.time);
    try {
      if (cfg.representation == HydroRepr::lagrangian) {
        s = lagrangian_step(s, kernel, map, dt);
      } else {
        EulerianOptions opt;
        opt.scheme = cfg.scheme;
        opt.cfl = cfg.cfl;
        opt.vacuum_threshold = cfg.vacuum_threshold;
        s = eulerian_step(s, kernel, map, dt, opt);
      }
    } catch (const characteristic_crossing& e) {
      out.regime_exit = true;
      out.regime_time = e.time();
      out.regime_reason = e.what();
      return out;
    }
    double lip = lipschitz_monitor(s, cfg.vacuum_threshold);
    if (lip > cfg.regime_M) {
      record(s);
      out.regime_exit = true;
      out.regime_time = s.time;
      out.regime_reason = "lipschitz monitor exceeded M = " + std::to_string(cfg.regime_M);
      return out;
    }
    if (s.time >= target - eps_t) {
      record(s);
      if (target >= cfg.T - eps_t) break;
      next_out = std::min(next_out + cfg.out_dt, cfg.T);
    }
  }
  return out;
}

}  // namespace flocklab
