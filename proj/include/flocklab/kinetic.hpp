#pragma once

// Deterministic solver for the relaxed Vlasov-alignment equation
//   f_t + v f_x + (F(f) f)_v = (1/eps) ((v - u_eps) f)_v
// on a periodic x in [0, L) and a truncated v interval, with the full set of
// energy / enstrophy / discrepancy diagnostics.
//
// One step is operator-split: (a) conservative upwind x-transport by v,
// (b) conservative upwind v-transport by the alignment force F(f),
// (c) an exact-in-time relaxation substep that contracts v toward u_eps with
// factor exp(-dt/eps), realized as a mass- and momentum-conservative
// semi-Lagrangian remap, so the 1/eps stiffness never restricts dt.
//
// The double-convolution diagnostics (D1, Delta, G) are evaluated through an
// exact regrouping of the sums: the x-convolution g(x,w) = sum_y phi(x-y)
// f(y,w) dy is formed once, after which every quadruple sum reduces to
// O(nx nv^2 + nx^2 nv) work. Unit tests pin these against literal
// quadruple-loop oracles on small grids.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flocklab/align.hpp"
#include "flocklab/errors.hpp"
#include "flocklab/numeric.hpp"
#include "flocklab/series.hpp"

namespace flocklab {

enum class KineticScheme { upwind, muscl };

struct PhaseGrid {
  int nx = 64;
  int nv = 128;
  double L = 1.0;
  double v_min = -1.0;
  double v_max = 1.0;

  double dx() const { return L / nx; }
  double dv() const { return (v_max - v_min) / nv; }
  double xc(int i) const { return (i + 0.5) * dx(); }
  double vc(int j) const { return v_min + (j + 0.5) * dv(); }
  double vface(int j) const { return v_min + j * dv(); }
};

/// Cell averages of f on the phase grid, x-major: values[i * nv + j].
struct PhaseDensity {
  PhaseGrid grid;
  std::vector<double> values;
  double time = 0.0;
  double epsilon = std::numeric_limits<double>::infinity();

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * grid.nv + j]; }
  double at(int i, int j) const {
    return values[static_cast<std::size_t>(i) * grid.nv + j];
  }
};

struct MomentFields {
  std::vector<double> rho;       ///< nx, zeroth moment
  std::vector<double> momentum;  ///< nx, first moment
  std::vector<double> u;         ///< momentum / rho, 0 in vacuum
  std::vector<std::uint8_t> vacuum_mask;
};

inline MomentFields moments(const PhaseDensity& f, double vacuum_threshold = 1e-12) {
  const int nx = f.grid.nx, nv = f.grid.nv;
  const double dv = f.grid.dv();
  MomentFields m;
  m.rho.assign(static_cast<std::size_t>(nx), 0.0);
  m.momentum.assign(static_cast<std::size_t>(nx), 0.0);
  m.u.assign(static_cast<std::size_t>(nx), 0.0);
  m.vacuum_mask.assign(static_cast<std::size_t>(nx), 0);
  for (int i = 0; i < nx; ++i) {
    double r = 0.0, q = 0.0;
    const double* row = &f.values[static_cast<std::size_t>(i) * nv];
    for (int j = 0; j < nv; ++j) {
      r += row[j];
      q += row[j] * f.grid.vc(j);
    }
    m.rho[static_cast<std::size_t>(i)] = r * dv;
    m.momentum[static_cast<std::size_t>(i)] = q * dv;
    if (m.rho[static_cast<std::size_t>(i)] >= vacuum_threshold) {
      m.u[static_cast<std::size_t>(i)] =
          m.momentum[static_cast<std::size_t>(i)] / m.rho[static_cast<std::size_t>(i)];
    } else {
      m.vacuum_mask[static_cast<std::size_t>(i)] = 1;
    }
  }
  return m;
}

namespace detail {

/// phi evaluated at the torus distance between cell centers offset by k cells.
inline std::vector<double> phi_offset_table(const PhaseGrid& g,
                                            const CommunicationKernel& kernel) {
  std::vector<double> tab(static_cast<std::size_t>(g.nx));
  for (int k = 0; k < g.nx; ++k)
    tab[static_cast<std::size_t>(k)] = kernel_eval(kernel, std::min(k, g.nx - k) * g.dx());
  return tab;
}

/// g(x, w) = sum_y phi(x - y) f(y, w) dx.
inline std::vector<double> x_convolution(const PhaseDensity& f,
                                         const std::vector<double>& phi_tab) {
  const int nx = f.grid.nx, nv = f.grid.nv;
  const double dx = f.grid.dx();
  std::vector<double> g(static_cast<std::size_t>(nx) * nv, 0.0);
  for (int i = 0; i < nx; ++i) {
    double* gi = &g[static_cast<std::size_t>(i) * nv];
    for (int y = 0; y < nx; ++y) {
      int k = i - y;
      if (k < 0) k += nx;
      const double w = phi_tab[static_cast<std::size_t>(k)] * dx;
      if (w == 0.0) continue;
      const double* fy = &f.values[static_cast<std::size_t>(y) * nv];
      for (int j = 0; j < nv; ++j) gi[j] += w * fy[j];
    }
  }
  return g;
}

/// Phi evaluated at all center-center velocity offsets k * dv.
inline std::vector<double> phi_map_center_table(const PhaseGrid& g, const AlignmentMap& map) {
  const int nv = g.nv;
  std::vector<double> tab(static_cast<std::size_t>(2 * nv - 1));
  for (int k = -(nv - 1); k <= nv - 1; ++k)
    tab[static_cast<std::size_t>(k + nv - 1)] = phi_map(map, k * g.dv());
  return tab;
}

/// Phi at center-minus-face offsets (j - k + 1/2) * dv, k a face index.
inline std::vector<double> phi_map_face_table(const PhaseGrid& g, const AlignmentMap& map) {
  const int nv = g.nv;
  std::vector<double> tab(static_cast<std::size_t>(2 * nv + 1));
  for (int d = -nv; d <= nv; ++d)
    tab[static_cast<std::size_t>(d + nv)] = phi_map(map, (d + 0.5) * g.dv());
  return tab;
}

}  // namespace detail

/// Alignment force F(f)(x, v) = int phi(x-y) Phi(w-v) f(y,w) dy dw at cell
/// centers.
inline std::vector<double> alignment_field(const PhaseDensity& f,
                                           const CommunicationKernel& kernel,
                                           const AlignmentMap& map) {
  const int nx = f.grid.nx, nv = f.grid.nv;
  const double dv = f.grid.dv();
  auto phi_tab = detail::phi_offset_table(f.grid, kernel);
  auto g = detail::x_convolution(f, phi_tab);
  auto ptab = detail::phi_map_center_table(f.grid, map);
  std::vector<double> F(static_cast<std::size_t>(nx) * nv, 0.0);
  for (int i = 0; i < nx; ++i) {
    const double* gi = &g[static_cast<std::size_t>(i) * nv];
    double* Fi = &F[static_cast<std::size_t>(i) * nv];
    for (int j = 0; j < nv; ++j) {
      double acc = 0.0;
      const double* row = &ptab[static_cast<std::size_t>(nv - 1 - j)];
      for (int w = 0; w < nv; ++w) acc += row[w] * gi[w];
      Fi[j] = acc * dv;
    }
  }
  return F;
}

struct KineticStepOptions {
  KineticScheme scheme = KineticScheme::upwind;
  double cfl = 0.9;
  double vacuum_threshold = 1e-12;
  double mass_tolerance = 1e-12;
};

namespace detail {

/// Conservative upwind (or minmod-MUSCL) transport of one row of cell
/// averages with per-face speeds; periodic wrap optional.
inline void advect_row(const double* q, double* out, const double* face_speed, int n,
                       double lambda, bool periodic, KineticScheme scheme) {
  // face k sits between cells k-1 and k; periodic grids use n faces,
  // bounded grids use n+1 with zero flux at the ends.
  auto cell = [&](int c) -> double {
    if (periodic) return q[(c % n + n) % n];
    if (c < 0 || c >= n) return 0.0;
    return q[c];
  };
  const int nfaces = periodic ? n : n + 1;
  std::vector<double> flux(static_cast<std::size_t>(nfaces), 0.0);
  for (int k = 0; k < nfaces; ++k) {
    if (!periodic && (k == 0 || k == n)) continue;  // zero flux at v-boundaries
    double a = face_speed[k];
    double qup;
    if (scheme == KineticScheme::upwind) {
      qup = (a >= 0.0) ? cell(k - 1) : cell(k);
    } else {
      if (a >= 0.0) {
        double s = minmod(cell(k - 1) - cell(k - 2), cell(k) - cell(k - 1));
        qup = cell(k - 1) + 0.5 * s;
      } else {
        double s = minmod(cell(k) - cell(k - 1), cell(k + 1) - cell(k));
        qup = cell(k) - 0.5 * s;
      }
    }
    flux[static_cast<std::size_t>(k)] = a * qup;
  }
  for (int c = 0; c < n; ++c) {
    double fr = periodic ? flux[static_cast<std::size_t>((c + 1) % n)]
                         : flux[static_cast<std::size_t>(c + 1)];
    double fl = flux[static_cast<std::size_t>(c)];
    out[c] = q[c] - lambda * (fr - fl);
  }
}

}  // namespace detail

/// One operator-split step (x-transport, v-transport, relaxation remap).
inline PhaseDensity kinetic_step(const PhaseDensity& f, const CommunicationKernel& kernel,
                                 const AlignmentMap& map, double dt,
                                 const KineticStepOptions& opt = {}) {
  const int nx = f.grid.nx, nv = f.grid.nv;
  const double dx = f.grid.dx(), dv = f.grid.dv();
  if (!(dt > 0.0)) throw std::domain_error("kinetic_step: dt must be > 0");

  double vmax = std::max(std::abs(f.grid.vc(0)), std::abs(f.grid.vc(nv - 1)));
  if (dt * vmax / dx > opt.cfl + 1e-12)
    throw cfl_violation("kinetic_step: x-advection CFL violated, dt*max|v|/dx = " +
                        std::to_string(dt * vmax / dx) + " > " + std::to_string(opt.cfl));

  const double mass_before = [&] {
    double s = 0.0;
    for (double v : f.values) s += v;
    return s;
  }();

  // (a) x-transport per v row, periodic upwind in the sign of v.
  PhaseDensity fa = f;
  {
    std::vector<double> row(static_cast<std::size_t>(nx));
    std::vector<double> out(static_cast<std::size_t>(nx));
    std::vector<double> speed(static_cast<std::size_t>(nx));
    for (int j = 0; j < nv; ++j) {
      double v = f.grid.vc(j);
      for (int k = 0; k < nx; ++k) speed[static_cast<std::size_t>(k)] = v;
      for (int i = 0; i < nx; ++i) row[static_cast<std::size_t>(i)] = f.at(i, j);
      detail::advect_row(row.data(), out.data(), speed.data(), nx, dt / dx, true,
                         opt.scheme);
      for (int i = 0; i < nx; ++i) fa.at(i, j) = out[static_cast<std::size_t>(i)];
    }
  }

  // (b) v-transport by the alignment force of the transported state,
  // evaluated at velocity faces; zero flux at the v-boundaries. The upwind
  // fluxes only approximate the pairwise-antisymmetric momentum exchange, so
  // each column is afterwards nudged (two-point deposit of a tiny velocity
  // shift) onto the exchange computed from cell centers, whose global sum
  // cancels to rounding. This keeps total momentum conserved.
  PhaseDensity fb = fa;
  {
    auto phi_tab = detail::phi_offset_table(f.grid, kernel);
    auto g = detail::x_convolution(fa, phi_tab);
    auto ftab = detail::phi_map_face_table(f.grid, map);
    auto ctab = detail::phi_map_center_table(f.grid, map);
    double fmax = 0.0;
    std::vector<std::vector<double>> faces(static_cast<std::size_t>(nx));
    std::vector<double> production(static_cast<std::size_t>(nx), 0.0);
    for (int i = 0; i < nx; ++i) {
      const double* gi = &g[static_cast<std::size_t>(i) * nv];
      const double* fi = &fa.values[static_cast<std::size_t>(i) * nv];
      faces[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(nv + 1));
      for (int k = 0; k <= nv; ++k) {
        double acc = 0.0;
        const double* row = &ftab[static_cast<std::size_t>(nv - k)];
        for (int w = 0; w < nv; ++w) acc += row[w] * gi[w];
        double val = acc * dv;
        faces[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = val;
        fmax = std::max(fmax, std::abs(val));
      }
      double prod = 0.0;  // int F f dv from cell centers (antisymmetric in total)
      for (int j = 0; j < nv; ++j) {
        if (fi[j] == 0.0) continue;
        double acc = 0.0;
        const double* row = &ctab[static_cast<std::size_t>(nv - 1 - j)];
        for (int w = 0; w < nv; ++w) acc += row[w] * gi[w];
        prod += fi[j] * acc;
      }
      production[static_cast<std::size_t>(i)] = prod * dv * dv;
    }
    if (dt * fmax / dv > opt.cfl + 1e-12)
      throw cfl_violation("kinetic_step: v-advection CFL violated, dt*max|F|/dv = " +
                          std::to_string(dt * fmax / dv) + " > " + std::to_string(opt.cfl));
    std::vector<double> out(static_cast<std::size_t>(nv));
    std::vector<double> shifted(static_cast<std::size_t>(nv));
    for (int i = 0; i < nx; ++i) {
      const double* col = &fa.values[static_cast<std::size_t>(i) * nv];
      detail::advect_row(col, out.data(), faces[static_cast<std::size_t>(i)].data(), nv,
                         dt / dv, false, opt.scheme);
      double mass = 0.0, dmom = 0.0;
      for (int j = 0; j < nv; ++j) {
        mass += out[static_cast<std::size_t>(j)];
        dmom += (out[static_cast<std::size_t>(j)] - col[j]) * f.grid.vc(j);
      }
      double* dst = &fb.values[static_cast<std::size_t>(i) * nv];
      double shift =
          (mass > 0.0)
              ? (dt * production[static_cast<std::size_t>(i)] / dv - dmom) / mass
              : 0.0;
      // a near-empty column can demand an absurd shift; its momentum is dust
      if (!(std::abs(shift) < dv)) shift = 0.0;
      if (shift == 0.0) {
        for (int j = 0; j < nv; ++j) dst[j] = out[static_cast<std::size_t>(j)];
      } else {
        std::fill(shifted.begin(), shifted.end(), 0.0);
        for (int j = 0; j < nv; ++j) {
          double q = out[static_cast<std::size_t>(j)];
          if (q == 0.0) continue;
          double t = j + shift / dv;
          int k = static_cast<int>(std::floor(t));
          double w = t - k;
          if (k < 0) { k = 0; w = 0.0; }
          if (k >= nv - 1) { k = nv - 1; w = 0.0; }
          shifted[static_cast<std::size_t>(k)] += q * (1.0 - w);
          if (w > 0.0) shifted[static_cast<std::size_t>(k) + 1] += q * w;
        }
        for (int j = 0; j < nv; ++j) dst[j] = shifted[static_cast<std::size_t>(j)];
      }
    }
  }

  // (c) exact relaxation: v -> u + (v - u) exp(-dt/eps) per column, deposited
  // back onto the grid with two-point linear weights. The deposit reproduces
  // each shifted center exactly in mass and first moment, so column mass and
  // momentum are preserved to rounding.
  PhaseDensity fc = fb;
  if (std::isfinite(f.epsilon)) {
    if (!(f.epsilon > 0.0)) throw std::domain_error("kinetic_step: epsilon must be > 0");
    const double lam = std::exp(-dt / f.epsilon);
    for (int i = 0; i < nx; ++i) {
      double* col = &fc.values[static_cast<std::size_t>(i) * nv];
      const double* src = &fb.values[static_cast<std::size_t>(i) * nv];
      double r = 0.0, q = 0.0;
      for (int j = 0; j < nv; ++j) {
        r += src[j];
        q += src[j] * f.grid.vc(j);
      }
      if (r <= 0.0) continue;
      const double uc = q / r;
      for (int j = 0; j < nv; ++j) col[j] = 0.0;
      for (int j = 0; j < nv; ++j) {
        if (src[j] == 0.0) continue;
        double vp = uc + lam * (f.grid.vc(j) - uc);
        double t = (vp - f.grid.v_min) / dv - 0.5;
        int k = static_cast<int>(std::floor(t));
        double w = t - k;
        if (k < 0) { k = 0; w = 0.0; }
        if (k >= nv - 1) { k = nv - 1; w = 0.0; }
        col[k] += src[j] * (1.0 - w);
        if (w > 0.0) col[k + 1] += src[j] * w;
      }
    }
  }

  double mass_after = 0.0, neg = 0.0;
  for (double v : fc.values) {
    mass_after += v;
    neg = std::min(neg, v);
  }
  if (std::abs(mass_after - mass_before) * dx * dv >
      opt.mass_tolerance * std::max(1.0, mass_before * dx * dv))
    throw solver_fault("kinetic_step: mass drift " +
                       std::to_string((mass_after - mass_before) * dx * dv) +
                       " exceeds tolerance");
  if (neg < -1e-14)
    throw solver_fault("kinetic_step: negative value " + std::to_string(neg) +
                       " below -1e-14 at t = " + std::to_string(f.time + dt));

  fc.time = f.time + dt;
  return fc;
}

// ---------------------------------------------------------------------------
// Energies, enstrophies, discrepancies
// ---------------------------------------------------------------------------

struct KineticEnergies {
  double E_kin;  ///< (1/2) int |v|^2 f
  double D1;     ///< (1/2) int phi |w-v|^p f f'
  double D2;     ///< int |v - u_eps|^2 f
  double E_mac;  ///< (1/2) int rho |u_eps|^2
  double D_mac;  ///< (1/2) int phi |u_eps(y)-u_eps(x)|^p rho rho'
};

namespace detail {

/// H(v, w) = sum_x f(x, v) g(x, w) dx with g the phi-convolution of f.
inline std::vector<double> velocity_pair_weights(const PhaseDensity& f,
                                                 const std::vector<double>& g) {
  const int nx = f.grid.nx, nv = f.grid.nv;
  const double dx = f.grid.dx();
  std::vector<double> H(static_cast<std::size_t>(nv) * nv, 0.0);
  for (int i = 0; i < nx; ++i) {
    const double* fi = &f.values[static_cast<std::size_t>(i) * nv];
    const double* gi = &g[static_cast<std::size_t>(i) * nv];
    for (int v = 0; v < nv; ++v) {
      const double fv = fi[v] * dx;
      if (fv == 0.0) continue;
      double* Hv = &H[static_cast<std::size_t>(v) * nv];
      for (int w = 0; w < nv; ++w) Hv[w] += fv * gi[w];
    }
  }
  return H;
}

}  // namespace detail

inline KineticEnergies energies(const PhaseDensity& f, const CommunicationKernel& kernel,
                                const AlignmentMap& map, double vacuum_threshold = 1e-12) {
  const int nx = f.grid.nx, nv = f.grid.nv;
  const double dx = f.grid.dx(), dv = f.grid.dv();
  MomentFields m = moments(f, vacuum_threshold);
  KineticEnergies out{0.0, 0.0, 0.0, 0.0, 0.0};

  for (int i = 0; i < nx; ++i) {
    const double* row = &f.values[static_cast<std::size_t>(i) * nv];
    const double ui = m.u[static_cast<std::size_t>(i)];
    double ek = 0.0, d2 = 0.0;
    for (int j = 0; j < nv; ++j) {
      double v = f.grid.vc(j);
      ek += v * v * row[j];
      double dvu = v - ui;
      d2 += dvu * dvu * row[j];
    }
    out.E_kin += 0.5 * ek * dx * dv;
    out.D2 += d2 * dx * dv;
    if (!m.vacuum_mask[static_cast<std::size_t>(i)])
      out.E_mac += 0.5 * m.rho[static_cast<std::size_t>(i)] * ui * ui * dx;
  }

  auto phi_tab = detail::phi_offset_table(f.grid, kernel);
  auto g = detail::x_convolution(f, phi_tab);
  auto H = detail::velocity_pair_weights(f, g);
  std::vector<double> wp(static_cast<std::size_t>(nv), 0.0);  // |k dv|^p
  for (int k = 1; k < nv; ++k) {
    double r = k * dv;
    wp[static_cast<std::size_t>(k)] = map.radial(r) * r * r;
  }
  double d1 = 0.0;
  for (int v = 0; v < nv; ++v) {
    const double* Hv = &H[static_cast<std::size_t>(v) * nv];
    for (int w = 0; w < nv; ++w) d1 += wp[static_cast<std::size_t>(std::abs(w - v))] * Hv[w];
  }
  out.D1 = 0.5 * d1 * dv * dv;

  double dmac = 0.0;
  for (int i = 0; i < nx; ++i) {
    if (m.vacuum_mask[static_cast<std::size_t>(i)]) continue;
    for (int j = i + 1; j < nx; ++j) {
      if (m.vacuum_mask[static_cast<std::size_t>(j)]) continue;
      double du = std::abs(m.u[static_cast<std::size_t>(j)] - m.u[static_cast<std::size_t>(i)]);
      if (du == 0.0) continue;
      dmac += phi_tab[static_cast<std::size_t>(j - i)] * map.radial(du) * du * du *
              m.rho[static_cast<std::size_t>(i)] * m.rho[static_cast<std::size_t>(j)];
    }
  }
  out.D_mac = dmac * dx * dx;  // the i<j half-sum supplies the leading 1/2
  return out;
}

struct KineticDiscrepancies {
  double Delta;    ///< enstrophy discrepancy Delta_eps
  double G_norm;   ///< L1-in-x norm of the alignment discrepancy G_eps
  double R_trace;  ///< integral of tr R_eps (= D2 in 1D)
};

/// For a linear map both integrands vanish pointwise, so the zeros are exact.
inline KineticDiscrepancies discrepancies(const PhaseDensity& f,
                                          const CommunicationKernel& kernel,
                                          const AlignmentMap& map,
                                          double vacuum_threshold = 1e-12) {
  const int nx = f.grid.nx, nv = f.grid.nv;
  const double dx = f.grid.dx(), dv = f.grid.dv();
  MomentFields m = moments(f, vacuum_threshold);

  double d2 = 0.0;
  std::vector<double> m2(static_cast<std::size_t>(nx), 0.0);
  for (int i = 0; i < nx; ++i) {
    const double* row = &f.values[static_cast<std::size_t>(i) * nv];
    double acc = 0.0, d2i = 0.0;
    const double ui = m.u[static_cast<std::size_t>(i)];
    for (int j = 0; j < nv; ++j) {
      double v = f.grid.vc(j);
      acc += v * v * row[j];
      d2i += (v - ui) * (v - ui) * row[j];
    }
    m2[static_cast<std::size_t>(i)] = acc * dv;
    d2 += d2i * dx * dv;
  }
  if (map.linear()) return {0.0, 0.0, d2};

  auto phi_tab = detail::phi_offset_table(f.grid, kernel);
  auto g = detail::x_convolution(f, phi_tab);

  // Delta = D1 - (1/2) sum phi(x-y) s(|u_y - u_x|) <|w-v|^2>_{f(x) f(y)}
  auto H = detail::velocity_pair_weights(f, g);
  std::vector<double> wp(static_cast<std::size_t>(nv), 0.0);
  for (int k = 1; k < nv; ++k) {
    double r = k * dv;
    wp[static_cast<std::size_t>(k)] = map.radial(r) * r * r;
  }
  double d1 = 0.0;
  for (int v = 0; v < nv; ++v) {
    const double* Hv = &H[static_cast<std::size_t>(v) * nv];
    for (int w = 0; w < nv; ++w) d1 += wp[static_cast<std::size_t>(std::abs(w - v))] * Hv[w];
  }
  d1 *= 0.5 * dv * dv;

  double cross = 0.0;
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < nx; ++j) {
      double du = std::abs(m.u[static_cast<std::size_t>(j)] - m.u[static_cast<std::size_t>(i)]);
      if (du == 0.0) continue;
      int k = std::abs(j - i);
      double pair = m.rho[static_cast<std::size_t>(i)] * m2[static_cast<std::size_t>(j)] -
                    2.0 * m.momentum[static_cast<std::size_t>(i)] *
                        m.momentum[static_cast<std::size_t>(j)] +
                    m2[static_cast<std::size_t>(i)] * m.rho[static_cast<std::size_t>(j)];
      cross += phi_tab[static_cast<std::size_t>(std::min(k, nx - k))] * map.radial(du) * pair;
    }
  }
  double delta = d1 - 0.5 * cross * dx * dx;

  // G(x) = sum_v f(x,v) [sum_w Phi(w-v) g(x,w)] dv^2
  //        - sum_y phi(x-y) s(|u_y-u_x|) (rho_x mom_y - mom_x rho_y) dx
  auto ptab = detail::phi_map_center_table(f.grid, map);
  double gnorm = 0.0;
  for (int i = 0; i < nx; ++i) {
    const double* fi = &f.values[static_cast<std::size_t>(i) * nv];
    const double* gi = &g[static_cast<std::size_t>(i) * nv];
    double a = 0.0;
    for (int v = 0; v < nv; ++v) {
      if (fi[v] == 0.0) continue;
      double acc = 0.0;
      const double* row = &ptab[static_cast<std::size_t>(nv - 1 - v)];
      for (int w = 0; w < nv; ++w) acc += row[w] * gi[w];
      a += fi[v] * acc;
    }
    a *= dv * dv;
    double b = 0.0;
    for (int j = 0; j < nx; ++j) {
      double du = std::abs(m.u[static_cast<std::size_t>(j)] - m.u[static_cast<std::size_t>(i)]);
      if (du == 0.0) continue;
      int k = std::abs(j - i);
      b += phi_tab[static_cast<std::size_t>(std::min(k, nx - k))] * map.radial(du) *
           (m.rho[static_cast<std::size_t>(i)] * m.momentum[static_cast<std::size_t>(j)] -
            m.momentum[static_cast<std::size_t>(i)] * m.rho[static_cast<std::size_t>(j)]);
    }
    b *= dx;
    gnorm += std::abs(a - b) * dx;
  }
  return {delta, gnorm, d2};
}

// ---------------------------------------------------------------------------
// Support diameters through the f > cutoff occupancy.
// ---------------------------------------------------------------------------

struct SupportDiameters {
  double S;  ///< torus diameter of the x-support (cell centers)
  double V;  ///< extent of the v-support (cell centers)
};

inline SupportDiameters support_diameters(const PhaseDensity& f, double cutoff = 1e-12) {
  const int nx = f.grid.nx, nv = f.grid.nv;
  std::vector<int> xs;
  int jlo = nv, jhi = -1;
  for (int i = 0; i < nx; ++i) {
    bool occ = false;
    const double* row = &f.values[static_cast<std::size_t>(i) * nv];
    for (int j = 0; j < nv; ++j) {
      if (row[j] > cutoff) {
        occ = true;
        jlo = std::min(jlo, j);
        jhi = std::max(jhi, j);
      }
    }
    if (occ) xs.push_back(i);
  }
  if (xs.empty()) return {0.0, 0.0};
  double S = 0.0;
  const double dx = f.grid.dx();
  for (std::size_t a = 0; a < xs.size(); ++a)
    for (std::size_t b = a + 1; b < xs.size(); ++b) {
      int k = xs[b] - xs[a];
      S = std::max(S, std::min(k, nx - k) * dx);
    }
  double V = (jhi - jlo) * f.grid.dv();
  return {S, V};
}

// ---------------------------------------------------------------------------
// Snapshot text format: header "nx nv L v_min v_max time epsilon", then
// nx * nv whitespace-separated cell values in x-major order, full precision.
// ---------------------------------------------------------------------------

inline void write_phase_snapshot(std::ostream& os, const PhaseDensity& f) {
  os << f.grid.nx << ' ' << f.grid.nv << ' ' << format_full(f.grid.L) << ' '
     << format_full(f.grid.v_min) << ' ' << format_full(f.grid.v_max) << ' '
     << format_full(f.time) << ' ' << format_full(f.epsilon) << '\n';
  for (int i = 0; i < f.grid.nx; ++i) {
    for (int j = 0; j < f.grid.nv; ++j)
      os << (j ? " " : "") << format_full(f.at(i, j));
    os << '\n';
  }
}

inline PhaseDensity read_phase_snapshot(std::istream& is) {
  PhaseDensity f;
  std::string eps_tok;  // epsilon may be "inf" (relaxation disabled)
  if (!(is >> f.grid.nx >> f.grid.nv >> f.grid.L >> f.grid.v_min >> f.grid.v_max >>
        f.time >> eps_tok))
    throw std::runtime_error("read_phase_snapshot: bad header");
  char* end = nullptr;
  f.epsilon = std::strtod(eps_tok.c_str(), &end);
  if (end == eps_tok.c_str()) throw std::runtime_error("read_phase_snapshot: bad epsilon");
  if (f.grid.nx < 1 || f.grid.nv < 1)
    throw std::runtime_error("read_phase_snapshot: bad grid dimensions");
  f.values.resize(static_cast<std::size_t>(f.grid.nx) * f.grid.nv);
  for (double& v : f.values)
    if (!(is >> v)) throw std::runtime_error("read_phase_snapshot: truncated data");
  return f;
}

// ---------------------------------------------------------------------------
// Configured runs
// ---------------------------------------------------------------------------

struct KineticRunConfig {
  PhaseGrid grid;                    ///< v bounds may be chosen automatically
  bool auto_v_bounds = true;         ///< [min u0 - V0, max u0 + V0] + 4 pad cells
  double T = 1.0;
  double out_dt = 0.02;
  double dt = 0.0;                   ///< fixed step when > 0, else CFL-derived
  double cfl = 0.9;
  KineticScheme scheme = KineticScheme::upwind;
  double vacuum_threshold = 1e-12;
  double support_cutoff = 1e-12;
  bool keep_snapshots = true;
  std::function<double(double)> rho0;
  std::function<double(double)> u0;
  double sigma = 0.0;                ///< velocity bump half-width (eps/2 if 0)
};

struct KineticRunResult {
  DiagnosticSeries series;
  std::vector<PhaseDensity> snapshots;
  std::vector<MomentFields> moment_snapshots;
};

/// Static bound on |F| used to pick a v-CFL step without probing the state:
/// |F| <= ||phi|| * max_{|z| <= W} |Phi(z)| with W the v-domain width.
inline double alignment_force_bound(const PhaseGrid& g, const CommunicationKernel& kernel,
                                    const AlignmentMap& map) {
  double W = g.v_max - g.v_min;
  if (W <= 0.0) return 0.0;
  return kernel.sup_norm * std::abs(phi_map(map, W));
}

inline void record_kinetic_row(DiagnosticSeries& series, const PhaseDensity& f,
                               const CommunicationKernel& kernel, const AlignmentMap& map,
                               double vacuum_threshold, double support_cutoff) {
  const double dx = f.grid.dx(), dv = f.grid.dv();
  double mass = 0.0, mom = 0.0, fmin = 0.0;
  for (int i = 0; i < f.grid.nx; ++i) {
    const double* row = &f.values[static_cast<std::size_t>(i) * f.grid.nv];
    for (int j = 0; j < f.grid.nv; ++j) {
      mass += row[j];
      mom += row[j] * f.grid.vc(j);
      fmin = std::min(fmin, row[j]);
    }
  }
  mass *= dx * dv;
  mom *= dx * dv;
  MomentFields m = moments(f, vacuum_threshold);
  double u_inf = 0.0;
  for (std::size_t i = 0; i < m.u.size(); ++i)
    if (!m.vacuum_mask[i]) u_inf = std::max(u_inf, std::abs(m.u[i]));
  KineticEnergies en = energies(f, kernel, map, vacuum_threshold);
  KineticDiscrepancies dis = discrepancies(f, kernel, map, vacuum_threshold);
  SupportDiameters sup = support_diameters(f, support_cutoff);
  series.append({f.time, mass, mom, en.E_kin, en.D1, en.D2, en.E_mac, en.D_mac,
                 dis.Delta, dis.G_norm, dis.R_trace, sup.S, sup.V, fmin, u_inf});
}

inline const std::vector<std::string>& kinetic_series_columns() {
  static const std::vector<std::string> cols = {
      "t",     "mass",  "momentum", "E_kin",   "D1", "D2", "E_mac", "D_mac",
      "Delta", "G_norm", "R_trace", "S",       "V",  "min_f", "u_inf"};
  return cols;
}

/// Advance a prepared initial density to time T, recording the full
/// diagnostic set at each output time.
inline KineticRunResult run_kinetic(const PhaseDensity& f0, const CommunicationKernel& kernel,
                                    const AlignmentMap& map, const KineticRunConfig& cfg) {
  KineticRunResult out;
  out.series.columns = kinetic_series_columns();
  PhaseDensity f = f0;

  auto record = [&](const PhaseDensity& state) {
    record_kinetic_row(out.series, state, kernel, map, cfg.vacuum_threshold,
                       cfg.support_cutoff);
    if (cfg.keep_snapshots) {
      out.snapshots.push_back(state);
      out.moment_snapshots.push_back(moments(state, cfg.vacuum_threshold));
    }
  };
  record(f);

  const double dx = f.grid.dx(), dv = f.grid.dv();
  double vmax = std::max(std::abs(f.grid.vc(0)), std::abs(f.grid.vc(f.grid.nv - 1)));
  double fbound = alignment_force_bound(f.grid, kernel, map);
  double dt_cfl = cfg.cfl * dx / std::max(vmax, 1e-300);
  if (fbound > 0.0) dt_cfl = std::min(dt_cfl, cfg.cfl * dv / fbound);
  if (cfg.scheme == KineticScheme::muscl) dt_cfl *= 0.5;

  KineticStepOptions opt;
  opt.scheme = cfg.scheme;
  opt.cfl = cfg.cfl;
  opt.vacuum_threshold = cfg.vacuum_threshold;

  const double eps_t = 1e-12 * std::max(1.0, cfg.T);
  double next_out = cfg.out_dt;
  while (f.time < cfg.T - eps_t) {
    double target = std::min(next_out, cfg.T);
    double dt = (cfg.dt > 0.0) ? cfg.dt : dt_cfl;
    dt = std::min(dt, target - f.time);
    try {
      f = kinetic_step(f, kernel, map, dt, opt);
    } catch (const solver_fault& e) {
      throw solver_fault(std::string(e.what()) + " (t = " + std::to_string(f.time) + ")");
    }
    if (f.time >= target - eps_t) {
      record(f);
      if (target >= cfg.T - eps_t) break;
      next_out = std::min(next_out + cfg.out_dt, cfg.T);
    }
  }
  return out;
}

}  // namespace flocklab
