#pragma once

// Convergence functionals tying the kinetic solver to the hydrodynamic one:
// relative entropies, exact Wasserstein-1 distances (1D via the CDF formula,
// small instances in any dimension via successive-shortest-path min-cost
// transport), log-log rate fitting, and well-prepared initial data.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flocklab/errors.hpp"
#include "flocklab/hydro.hpp"
#include "flocklab/kinetic.hpp"

namespace flocklab {

struct DiscreteMeasure {
  int dim = 1;
  std::vector<std::array<double, 2>> points;  ///< second coordinate unused in 1D
  std::vector<double> masses;

  double total_mass() const {
    double s = 0.0;
    for (double m : masses) s += m;
    return s;
  }

  void add(double x, double mass) {
    points.push_back({x, 0.0});
    masses.push_back(mass);
  }
  void add(double x, double y, double mass) {
    points.push_back({x, y});
    masses.push_back(mass);
  }

  void normalize() {
    double t = total_mass();
    if (t <= 0.0) throw std::invalid_argument("DiscreteMeasure: cannot normalize zero mass");
    for (double& m : masses) m /= t;
  }
};

inline DiscreteMeasure measure_from_grid(const std::vector<double>& rho, double L) {
  DiscreteMeasure mu;
  mu.dim = 1;
  const int n = static_cast<int>(rho.size());
  const double dx = L / n;
  for (int i = 0; i < n; ++i)
    if (rho[static_cast<std::size_t>(i)] > 0.0)
      mu.add((i + 0.5) * dx, rho[static_cast<std::size_t>(i)] * dx);
  return mu;
}

inline DiscreteMeasure measure_from_markers(const HydroState& s) {
  if (s.representation != HydroRepr::lagrangian)
    throw std::invalid_argument("measure_from_markers: state is not lagrangian");
  DiscreteMeasure mu;
  mu.dim = 1;
  for (std::size_t i = 0; i < s.X.size(); ++i) {
    double x = std::fmod(s.X[i], s.L);
    if (x < 0.0) x += s.L;
    mu.add(x, s.m[i]);
  }
  return mu;
}

// ---------------------------------------------------------------------------
// W1 in 1D: integral of |F_mu - F_nu| on the merged sorted support.
// ---------------------------------------------------------------------------

inline double w1_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.dim != 1 || nu.dim != 1)
    throw std::invalid_argument("w1_1d: measures must be one-dimensional");
  double tm = mu.total_mass(), tn = nu.total_mass();
  if (std::abs(tm - tn) > 1e-12 * std::max({1.0, tm, tn}))
    throw std::invalid_argument("w1_1d: total masses differ (" + format_full(tm) + " vs " +
                                format_full(tn) + ")");
  std::vector<std::pair<double, double>> events;
  events.reserve(mu.points.size() + nu.points.size());
  for (std::size_t i = 0; i < mu.points.size(); ++i)
    events.emplace_back(mu.points[i][0], mu.masses[i]);
  for (std::size_t i = 0; i < nu.points.size(); ++i)
    events.emplace_back(nu.points[i][0], -nu.masses[i]);
  std::sort(events.begin(), events.end());
  double w1 = 0.0, cdf = 0.0;
  for (std::size_t k = 0; k + 1 < events.size(); ++k) {
    cdf += events[k].second;
    w1 += std::abs(cdf) * (events[k + 1].first - events[k].first);
  }
  return w1;
}

// ---------------------------------------------------------------------------
// Exact optimal transport on small discrete supports (any dimension):
// successive shortest augmenting paths with potentials on the dense bipartite
// graph. Deterministic: Dijkstra ties resolve to the lowest node index.
// ---------------------------------------------------------------------------

inline double w1_discrete_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                int max_atoms = 400) {
  const int m = static_cast<int>(mu.points.size());
  const int n = static_cast<int>(nu.points.size());
  if (m > max_atoms || n > max_atoms)
    throw std::length_error("w1_discrete_exact: atom count " +
                            std::to_string(std::max(m, n)) + " exceeds cap " +
                            std::to_string(max_atoms) + "; coarsen the measures first");
  if (m == 0 || n == 0) throw std::invalid_argument("w1_discrete_exact: empty measure");
  double tm = mu.total_mass(), tn = nu.total_mass();
  if (std::abs(tm - tn) > 1e-12 * std::max({1.0, tm, tn}))
    throw std::invalid_argument("w1_discrete_exact: total masses differ (" +
                                format_full(tm) + " vs " + format_full(tn) + ")");

  std::vector<double> cost(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double dx = mu.points[static_cast<std::size_t>(i)][0] -
                  nu.points[static_cast<std::size_t>(j)][0];
      double dy = mu.points[static_cast<std::size_t>(i)][1] -
                  nu.points[static_cast<std::size_t>(j)][1];
      cost[static_cast<std::size_t>(i) * n + j] = std::hypot(dx, dy);
    }

  std::vector<double> supply(mu.masses.begin(), mu.masses.end());
  std::vector<double> demand(nu.masses.begin(), nu.masses.end());
  std::vector<double> flow(static_cast<std::size_t>(m) * n, 0.0);
  std::vector<double> pot(static_cast<std::size_t>(m + n), 0.0);

  const int V = m + n;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(V));
  std::vector<int> parent(static_cast<std::size_t>(V));
  std::vector<char> done(static_cast<std::size_t>(V));

  double total_supply = 0.0;
  for (double s : supply) total_supply += s;
  const double rem_tol = 1e-13 * std::max(1.0, total_supply);
  int guard = 64 * (V + 1);

  for (;;) {
    double remaining = 0.0;
    for (double s : supply) remaining += s;
    if (remaining <= rem_tol || guard-- <= 0) break;

    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    bool any_seed = false;
    for (int i = 0; i < m; ++i)
      if (supply[static_cast<std::size_t>(i)] > 0.0) {
        dist[static_cast<std::size_t>(i)] = 0.0;
        any_seed = true;
      }
    if (!any_seed) break;

    int target = -1;
    for (int it = 0; it < V; ++it) {
      int best = -1;
      for (int x = 0; x < V; ++x)
        if (!done[static_cast<std::size_t>(x)] && dist[static_cast<std::size_t>(x)] < inf &&
            (best < 0 || dist[static_cast<std::size_t>(x)] < dist[static_cast<std::size_t>(best)]))
          best = x;
      if (best < 0) break;
      done[static_cast<std::size_t>(best)] = 1;
      if (best >= m && demand[static_cast<std::size_t>(best - m)] > 0.0) {
        target = best;
        break;
      }
      if (best < m) {
        int i = best;
        for (int j = 0; j < n; ++j) {
          double rc = cost[static_cast<std::size_t>(i) * n + j] + pot[static_cast<std::size_t>(i)] -
                      pot[static_cast<std::size_t>(m + j)];
          if (rc < 0.0) rc = 0.0;  // rounding guard
          double nd = dist[static_cast<std::size_t>(i)] + rc;
          if (nd < dist[static_cast<std::size_t>(m + j)]) {
            dist[static_cast<std::size_t>(m + j)] = nd;
            parent[static_cast<std::size_t>(m + j)] = i;
          }
        }
      } else {
        int j = best - m;
        for (int i = 0; i < m; ++i) {
          if (flow[static_cast<std::size_t>(i) * n + j] <= 0.0) continue;
          double rc = -cost[static_cast<std::size_t>(i) * n + j] + pot[static_cast<std::size_t>(m + j)] -
                      pot[static_cast<std::size_t>(i)];
          if (rc < 0.0) rc = 0.0;
          double nd = dist[static_cast<std::size_t>(best)] + rc;
          if (nd < dist[static_cast<std::size_t>(i)]) {
            dist[static_cast<std::size_t>(i)] = nd;
            parent[static_cast<std::size_t>(i)] = m + j;
          }
        }
      }
    }
    if (target < 0)
      throw std::runtime_error("w1_discrete_exact: no augmenting path (unbalanced input?)");

    double dt = dist[static_cast<std::size_t>(target)];
    for (int x = 0; x < V; ++x)
      pot[static_cast<std::size_t>(x)] +=
          std::min(dist[static_cast<std::size_t>(x)], dt);

    // bottleneck along the path, then augment
    double delta = demand[static_cast<std::size_t>(target - m)];
    int node = target;
    while (parent[static_cast<std::size_t>(node)] >= 0) {
      int prev = parent[static_cast<std::size_t>(node)];
      if (node >= m)
        ;  // forward arc prev -> node, uncapacitated
      else
        delta = std::min(delta, flow[static_cast<std::size_t>(node) * n + (prev - m)]);
      node = prev;
    }
    delta = std::min(delta, supply[static_cast<std::size_t>(node)]);
    if (!(delta > 0.0))
      throw std::runtime_error("w1_discrete_exact: degenerate augmentation");

    int origin = node;
    node = target;
    while (parent[static_cast<std::size_t>(node)] >= 0) {
      int prev = parent[static_cast<std::size_t>(node)];
      if (node >= m)
        flow[static_cast<std::size_t>(prev) * n + (node - m)] += delta;
      else
        flow[static_cast<std::size_t>(node) * n + (prev - m)] -= delta;
      node = prev;
    }
    supply[static_cast<std::size_t>(origin)] -= delta;
    demand[static_cast<std::size_t>(target - m)] -= delta;
  }
  double leftover = 0.0;
  for (double s : supply) leftover += s;
  if (leftover > rem_tol)
    throw std::runtime_error("w1_discrete_exact: failed to route all mass");

  double total = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      total += flow[static_cast<std::size_t>(i) * n + j] * cost[static_cast<std::size_t>(i) * n + j];
  return total;
}

// ---------------------------------------------------------------------------
// Phase-space W1 between a kinetic density and a hydrodynamic state.
// ---------------------------------------------------------------------------

struct PhaseW1 {
  double value;
  double error_bar;  ///< coarse-cell diameter: rigor gap of the coarsening
};

inline DiscreteMeasure phase_atoms(const PhaseDensity& f, int coarsen) {
  if (coarsen < 1) throw std::domain_error("phase_atoms: coarsen must be >= 1");
  const int nx = f.grid.nx, nv = f.grid.nv;
  const double dx = f.grid.dx(), dv = f.grid.dv();
  DiscreteMeasure mu;
  mu.dim = 2;
  for (int bi = 0; bi < nx; bi += coarsen) {
    for (int bj = 0; bj < nv; bj += coarsen) {
      double mass = 0.0, cx = 0.0, cv = 0.0;
      for (int i = bi; i < std::min(bi + coarsen, nx); ++i)
        for (int j = bj; j < std::min(bj + coarsen, nv); ++j) {
          double w = f.at(i, j) * dx * dv;
          mass += w;
          cx += w * f.grid.xc(i);
          cv += w * f.grid.vc(j);
        }
      if (mass > 0.0) mu.add(cx / mass, cv / mass, mass);
    }
  }
  return mu;
}

inline DiscreteMeasure hydro_phase_atoms(const HydroState& s, double vacuum_threshold = 1e-12) {
  DiscreteMeasure mu;
  mu.dim = 2;
  if (s.representation == HydroRepr::lagrangian) {
    for (std::size_t i = 0; i < s.X.size(); ++i) {
      double x = std::fmod(s.X[i], s.L);
      if (x < 0.0) x += s.L;
      mu.add(x, s.u[i], s.m[i]);
    }
  } else {
    const int n = static_cast<int>(s.rho.size());
    const double dx = s.L / n;
    for (int i = 0; i < n; ++i) {
      std::size_t k = static_cast<std::size_t>(i);
      if (s.rho[k] < vacuum_threshold) continue;
      mu.add((i + 0.5) * dx, s.mom[k] / s.rho[k], s.rho[k] * dx);
    }
  }
  return mu;
}

/// W1 on the phase plane between f (block-coarsened to atom centers of mass)
/// and the hydro graph measure rho(x) delta_{v = u(x)}.
inline PhaseW1 phase_w1(const PhaseDensity& f, const HydroState& hydro, int coarsen,
                        int max_atoms = 400, double vacuum_threshold = 1e-12) {
  DiscreteMeasure a = phase_atoms(f, coarsen);
  DiscreteMeasure b = hydro_phase_atoms(hydro, vacuum_threshold);
  a.normalize();
  b.normalize();
  double bar = std::hypot(coarsen * f.grid.dx(), coarsen * f.grid.dv());
  return {w1_discrete_exact(a, b, max_atoms), bar};
}

// ---------------------------------------------------------------------------
// Relative entropies
// ---------------------------------------------------------------------------

/// eta_eps = (1/2) int rho_eps |u_eps - u|^2 dx, vacuum cells excluded.
inline double relative_entropy(const MomentFields& mom, const std::vector<double>& u_grid,
                               double dx) {
  if (mom.rho.size() != u_grid.size())
    throw std::invalid_argument("relative_entropy: grid mismatch (" +
                                std::to_string(mom.rho.size()) + " vs " +
                                std::to_string(u_grid.size()) + " cells)");
  double acc = 0.0;
  for (std::size_t i = 0; i < mom.rho.size(); ++i) {
    if (mom.vacuum_mask[i]) continue;
    double d = mom.u[i] - u_grid[i];
    acc += mom.rho[i] * d * d;
  }
  return 0.5 * acc * dx;
}

/// eta_eps^K = (1/2) int |v - u(x)|^2 f dx dv.
inline double kinetic_relative_entropy(const PhaseDensity& f,
                                       const std::vector<double>& u_grid) {
  if (static_cast<int>(u_grid.size()) != f.grid.nx)
    throw std::invalid_argument("kinetic_relative_entropy: grid mismatch");
  const int nx = f.grid.nx, nv = f.grid.nv;
  double acc = 0.0;
  for (int i = 0; i < nx; ++i) {
    const double* row = &f.values[static_cast<std::size_t>(i) * nv];
    double ui = u_grid[static_cast<std::size_t>(i)];
    double col = 0.0;
    for (int j = 0; j < nv; ++j) {
      double d = f.grid.vc(j) - ui;
      col += d * d * row[j];
    }
    acc += col;
  }
  return 0.5 * acc * f.grid.dx() * f.grid.dv();
}

// ---------------------------------------------------------------------------
// Rate fitting: least squares on (log eps, log value).
// ---------------------------------------------------------------------------

struct RateFit {
  double slope;
  double intercept;
  double r2;
};

inline RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 points");
  std::vector<double> xs, ys;
  for (auto& [e, v] : points) {
    if (!(e > 0.0) || !(v > 0.0))
      throw std::invalid_argument("fit_rate: points must be strictly positive");
    xs.push_back(std::log(e));
    ys.push_back(std::log(v));
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_rate: degenerate abscissae");
  RateFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0.0, ss_tot = 0.0, ybar = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += r * r;
    ss_tot += (ys[i] - ybar) * (ys[i] - ybar);
  }
  fit.r2 = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Well-prepared initial data: f0(x, v) = rho0(x) B_sigma(v - u0(x)) with a
// compact bump of half-width sigma = eps/2, renormalized on the grid and
// mean-corrected per column so u_eps(0) matches u0 exactly.
// ---------------------------------------------------------------------------

struct PrepGridSpec {
  int nx = 64;
  int nv = 128;
  double L = 1.0;
  bool auto_v_bounds = true;  ///< [min u0 - V0, max u0 + V0] plus pad cells
  double v_min = -1.0;
  double v_max = 1.0;
  int pad_cells = 4;
};

struct PreparedInitial {
  PhaseDensity f;
  double w1_upper;  ///< feasible-plan upper bound on W1(f_eps^0, f^0)
};

inline PreparedInitial prepare_initial(const std::function<double(double)>& rho0,
                                       const std::function<double(double)>& u0,
                                       double epsilon, const PrepGridSpec& spec,
                                       double sigma_override = 0.0) {
  if (!(epsilon > 0.0)) throw std::domain_error("prepare_initial: epsilon must be > 0");
  const int nx = spec.nx, nv = spec.nv;
  const double sigma = sigma_override > 0.0 ? sigma_override : 0.5 * epsilon;

  PhaseGrid g;
  g.nx = nx;
  g.nv = nv;
  g.L = spec.L;
  const double dx = g.dx();

  std::vector<double> rho(static_cast<std::size_t>(nx)), uu(static_cast<std::size_t>(nx));
  double umin = 0.0, umax = 0.0, total = 0.0;
  for (int i = 0; i < nx; ++i) {
    double x = (i + 0.5) * dx;
    double r = rho0(x);
    if (r < 0.0) throw std::domain_error("prepare_initial: rho0 < 0");
    rho[static_cast<std::size_t>(i)] = r;
    total += r * dx;
    double u = u0(x);
    uu[static_cast<std::size_t>(i)] = u;
    if (i == 0 || u < umin) umin = u;
    if (i == 0 || u > umax) umax = u;
  }
  if (!(total > 0.0)) throw std::domain_error("prepare_initial: rho0 has zero mass");
  for (double& r : rho) r /= total;

  if (spec.auto_v_bounds) {
    double V0 = (umax - umin) + 2.0 * sigma;
    if (V0 < 1e-8) V0 = std::max(1.0, 4.0 * sigma);  // flocked data: avoid a degenerate domain
    double lo = umin - V0, hi = umax + V0;
    int interior = nv - 2 * spec.pad_cells;
    if (interior < 8) throw std::domain_error("prepare_initial: nv too small for padding");
    double dv = (hi - lo) / interior;
    g.v_min = lo - spec.pad_cells * dv;
    g.v_max = hi + spec.pad_cells * dv;
  } else {
    g.v_min = spec.v_min;
    g.v_max = spec.v_max;
  }
  const double dv = g.dv();

  PhaseDensity f;
  f.grid = g;
  f.values.assign(static_cast<std::size_t>(nx) * nv, 0.0);
  f.time = 0.0;
  f.epsilon = epsilon;

  std::vector<double> col(static_cast<std::size_t>(nv));
  for (int i = 0; i < nx; ++i) {
    const double ui = uu[static_cast<std::size_t>(i)];
    double wsum = 0.0;
    for (int j = 0; j < nv; ++j) {
      double s = (g.vc(j) - ui) / sigma;
      double w = (std::abs(s) < 1.0) ? (1.0 - s * s) * (1.0 - s * s) : 0.0;
      col[static_cast<std::size_t>(j)] = w;
      wsum += w;
    }
    if (wsum <= 0.0) {
      // bump narrower than a cell: two-point deposit of the monokinetic atom
      std::fill(col.begin(), col.end(), 0.0);
      double t = (ui - g.v_min) / dv - 0.5;
      int k = static_cast<int>(std::floor(t));
      double w = t - k;
      if (k < 0) { k = 0; w = 0.0; }
      if (k >= nv - 1) { k = nv - 1; w = 0.0; }
      col[static_cast<std::size_t>(k)] = 1.0 - w;
      if (w > 0.0) col[static_cast<std::size_t>(k) + 1] = w;
      wsum = 1.0;
    }
    const double scale = rho[static_cast<std::size_t>(i)] / (wsum * dv);
    double* dst = &f.values[static_cast<std::size_t>(i) * nv];
    for (int j = 0; j < nv; ++j) dst[j] = col[static_cast<std::size_t>(j)] * scale;

    // shift the column by the discrete mean defect so u_eps(0) == u0 exactly
    double r = 0.0, q = 0.0;
    for (int j = 0; j < nv; ++j) {
      r += dst[j];
      q += dst[j] * g.vc(j);
    }
    double delta = q / r - ui;
    if (delta != 0.0) {
      std::fill(col.begin(), col.end(), 0.0);
      for (int j = 0; j < nv; ++j) {
        if (dst[j] == 0.0) continue;
        double t = j - delta / dv;
        int k = static_cast<int>(std::floor(t));
        double w = t - k;
        if (k < 0) { k = 0; w = 0.0; }
        if (k >= nv - 1) { k = nv - 1; w = 0.0; }
        col[static_cast<std::size_t>(k)] += dst[j] * (1.0 - w);
        if (w > 0.0) col[static_cast<std::size_t>(k) + 1] += dst[j] * w;
      }
      for (int j = 0; j < nv; ++j) dst[j] = col[static_cast<std::size_t>(j)];
    }
  }

  double mass = 0.0;
  for (double v : f.values) mass += v;
  mass *= dx * dv;
  for (double& v : f.values) v /= mass;

  // feasible transport plan: slide each column's mass to (x_i, u0(x_i))
  double bound = 0.0;
  for (int i = 0; i < nx; ++i) {
    const double* row = &f.values[static_cast<std::size_t>(i) * nv];
    const double ui = uu[static_cast<std::size_t>(i)];
    for (int j = 0; j < nv; ++j) bound += row[j] * std::abs(g.vc(j) - ui);
  }
  bound *= dx * dv;
  if (!(bound < epsilon))
    throw solver_fault("prepare_initial: well-prepared check failed, W1 bound " +
                       format_full(bound) + " >= epsilon " + format_full(epsilon));
  return {std::move(f), bound};
}

}  // namespace flocklab
