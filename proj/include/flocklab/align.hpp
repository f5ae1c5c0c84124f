#pragma once

// Communication kernels phi, alignment nonlinearities Phi, the Gaussian
// profile M and the effective isothermal map Psi = Phi * M, together with
// the scalar Hoelder inequalities every solver module relies on.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flocklab/errors.hpp"

namespace flocklab {

// ---------------------------------------------------------------------------
// Communication kernel phi: radial, bounded, Lipschitz, non-increasing.
// ---------------------------------------------------------------------------

struct CommunicationKernel {
  enum class Family { inverse_power, constant, table };

  Family family = Family::inverse_power;
  double alpha = 0.0;   ///< exponent of phi(r) = (1+r)^(-alpha)
  double value = 1.0;   ///< level of the constant family
  std::optional<double> lower_bound;  ///< phi_lower, if one is known
  double lipschitz_const = 0.0;
  double sup_norm = 1.0;

  // piecewise-linear table (family == table); constant extension past the
  // last radius keeps the kernel non-increasing and bounded below.
  std::vector<double> table_r;
  std::vector<double> table_phi;

  static CommunicationKernel inverse_power(double alpha) {
    if (alpha < 0.0) throw std::domain_error("inverse_power kernel needs alpha >= 0");
    CommunicationKernel k;
    k.family = Family::inverse_power;
    k.alpha = alpha;
    k.sup_norm = 1.0;
    k.lipschitz_const = alpha;  // |phi'(r)| = alpha (1+r)^(-alpha-1) <= alpha
    if (alpha == 0.0) k.lower_bound = 1.0;
    return k;
  }

  static CommunicationKernel constant(double value = 1.0) {
    if (value < 0.0) throw std::domain_error("constant kernel needs value >= 0");
    CommunicationKernel k;
    k.family = Family::constant;
    k.value = value;
    k.sup_norm = value;
    k.lipschitz_const = 0.0;
    k.lower_bound = value;
    return k;
  }

  static CommunicationKernel from_table(std::vector<double> r, std::vector<double> phi) {
    if (r.size() != phi.size() || r.size() < 2)
      throw std::domain_error("table kernel needs matching r/phi lists of size >= 2");
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (phi[i] < 0.0) throw std::domain_error("table kernel values must be >= 0");
      if (i > 0 && r[i] <= r[i - 1])
        throw std::domain_error("table kernel radii must be strictly increasing");
      if (i > 0 && phi[i] > phi[i - 1])
        throw std::domain_error("table kernel must be non-increasing");
    }
    if (r.front() != 0.0) throw std::domain_error("table kernel must start at r = 0");
    CommunicationKernel k;
    k.family = Family::table;
    k.sup_norm = phi.front();
    k.lower_bound = phi.back();
    double lip = 0.0;
    for (std::size_t i = 1; i < r.size(); ++i)
      lip = std::max(lip, (phi[i - 1] - phi[i]) / (r[i] - r[i - 1]));
    k.lipschitz_const = lip;
    k.table_r = std::move(r);
    k.table_phi = std::move(phi);
    return k;
  }
};

/// Evaluate phi(r). Negative radii are a caller bug, not a data regime.
inline double kernel_eval(const CommunicationKernel& kernel, double r) {
  if (!(r >= 0.0)) throw std::domain_error("kernel_eval: radius must be >= 0");
  switch (kernel.family) {
    case CommunicationKernel::Family::inverse_power:
      return std::pow(1.0 + r, -kernel.alpha);
    case CommunicationKernel::Family::constant:
      return kernel.value;
    case CommunicationKernel::Family::table: {
      const auto& xs = kernel.table_r;
      const auto& ys = kernel.table_phi;
      if (r >= xs.back()) return ys.back();
      auto it = std::upper_bound(xs.begin(), xs.end(), r);
      std::size_t hi = static_cast<std::size_t>(it - xs.begin());
      std::size_t lo = hi - 1;
      double w = (r - xs[lo]) / (xs[hi] - xs[lo]);
      return ys[lo] + w * (ys[hi] - ys[lo]);
    }
  }
  return 0.0;  // unreachable
}

// ---------------------------------------------------------------------------
// Alignment map Phi(z) = |z|^(p-2) z  (p-power)  or  h(|z|) z  (general).
// ---------------------------------------------------------------------------

struct AlignmentMap {
  enum class Kind { p_power, general };

  Kind kind = Kind::p_power;
  double p = 2.0;
  double q = 1.0;  ///< Hoelder exponent of the radial profile
  std::function<double(double)> h;             ///< general radial profile
  std::function<double(double)> holder_coeff;  ///< R -> c_p (or C_R)

  static AlignmentMap p_power(double p) {
    if (p < 2.0) throw std::domain_error("p_power map needs p >= 2");
    AlignmentMap m;
    m.kind = Kind::p_power;
    m.p = p;
    m.q = (p == 2.0) ? 1.0 : std::min(p - 2.0, 1.0);
    m.holder_coeff = [p](double R) -> double {
      if (p == 2.0) return 0.0;
      if (p <= 3.0) return 1.0;
      return (p - 2.0) * std::pow(R, p - 3.0);
    };
    return m;
  }

  /// General nonlinearity Phi(z) = h(|z|) z with user-supplied Hoelder data;
  /// there is no constructive recipe for C_R, so the caller provides it.
  static AlignmentMap general(std::function<double(double)> h, double q,
                              std::function<double(double)> holder_coeff) {
    if (!(q > 0.0 && q <= 1.0)) throw std::domain_error("general map needs q in (0,1]");
    AlignmentMap m;
    m.kind = Kind::general;
    m.h = std::move(h);
    m.q = q;
    m.holder_coeff = std::move(holder_coeff);
    return m;
  }

  bool linear() const { return kind == Kind::p_power && p == 2.0; }

  /// Radial factor s(r) with Phi(z) = s(|z|) z; s(0) is never evaluated at a
  /// negative power because callers special-case |z| = 0.
  double radial(double r) const {
    if (kind == Kind::p_power) return std::pow(r, p - 2.0);
    return h(r);
  }
};

/// Phi applied to a 1D velocity difference. Exactly zero at z = 0 (Phi is
/// continuous there even when its derivative is not).
inline double phi_map(const AlignmentMap& map, double z) {
  if (z == 0.0) return 0.0;
  return map.radial(std::abs(z)) * z;
}

/// Phi applied to a 2D velocity difference.
inline std::array<double, 2> phi_map(const AlignmentMap& map, std::array<double, 2> z) {
  double r = std::hypot(z[0], z[1]);
  if (r == 0.0) return {0.0, 0.0};
  double s = map.radial(r);
  return {s * z[0], s * z[1]};
}

/// Scalar Hoelder gap |a^(p-2) - b^(p-2)| together with its bound:
/// |a-b|^(p-2) for 2 < p <= 3, (p-2) R^(p-3) |a-b| for p > 3.
/// For a general map: |h(a) - h(b)| vs C_R |a-b|^q.
struct HolderGap {
  double gap;
  double bound;
};

inline HolderGap holder_gap(const AlignmentMap& map, double a, double b, double R) {
  if (!(a >= 0.0 && b >= 0.0 && a <= R && b <= R))
    throw std::domain_error("holder_gap: arguments must satisfy 0 <= a,b <= R");
  if (map.kind == AlignmentMap::Kind::general) {
    double gap = std::abs(map.h(a) - map.h(b));
    double bound = map.holder_coeff(R) * std::pow(std::abs(a - b), map.q);
    return {gap, bound};
  }
  const double p = map.p;
  if (p == 2.0) return {0.0, 0.0};
  double gap = std::abs(std::pow(a, p - 2.0) - std::pow(b, p - 2.0));
  double bound = (p <= 3.0) ? std::pow(std::abs(a - b), p - 2.0)
                            : (p - 2.0) * std::pow(R, p - 3.0) * std::abs(a - b);
  return {gap, bound};
}

// ---------------------------------------------------------------------------
// Gaussian profile M(z) = (4 pi)^(-d/2) exp(-|z|^2 / 4) and its moments.
// ---------------------------------------------------------------------------

struct GaussianProfile {
  int dimension = 1;

  double operator()(double z) const {
    constexpr double pi = 3.14159265358979323846;
    return std::exp(-z * z / 4.0) / std::sqrt(4.0 * pi);
  }
};

/// k-th moment of M in 1D: 2^k Gamma((k+1)/2) / Gamma(1/2) for even k,
/// zero for odd k. Computed as 2^j (2j-1)!! for k = 2j, which is exact
/// in double precision for every k used here.
inline double gaussian_moment(int k) {
  if (k < 0) throw std::domain_error("gaussian_moment: k must be >= 0");
  if (k % 2 == 1) return 0.0;
  int j = k / 2;
  double m = 1.0;
  for (int i = 1; i <= j; ++i) m *= 2.0 * (2.0 * i - 1.0);
  return m;
}

namespace detail {

/// Gauss-Hermite nodes/weights for weight exp(-s^2), Newton iteration on the
/// orthonormal Hermite recurrence. Nodes are symmetrized exactly so that odd
/// integrands cancel to rounding.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussHermite gauss_hermite(int n) {
  if (n < 1) throw std::domain_error("gauss_hermite: order must be >= 1");
  constexpr double pi = 3.14159265358979323846;
  const double pim4 = std::pow(pi, -0.25);
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[static_cast<std::size_t>(i) - 2];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 -
             std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[static_cast<std::size_t>(i)] = z;
    w[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
  }
  GaussHermite gh;
  gh.nodes.resize(static_cast<std::size_t>(n));
  gh.weights.resize(static_cast<std::size_t>(n));
  // store descending roots on the positive side, mirror exactly
  for (int i = 0; i < m; ++i) {
    gh.nodes[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    gh.nodes[static_cast<std::size_t>(n - 1 - i)] = -x[static_cast<std::size_t>(i)];
    gh.weights[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)];
    gh.weights[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
  }
  if (n % 2 == 1) gh.nodes[static_cast<std::size_t>(m - 1)] = 0.0;
  return gh;
}

}  // namespace detail

/// Effective isothermal alignment Psi(z) = (Phi * M)(z), evaluated by
/// Gauss-Hermite quadrature after the substitution a = 2 s that matches the
/// exp(-a^2/4) weight. 1D only; the higher-d radial integral is out of scope.
inline double psi_map(const AlignmentMap& map, double z, int quad_order = 64, int dim = 1) {
  if (dim != 1)
    throw std::logic_error("psi_map: only d = 1 is implemented");
  if (quad_order < 8) throw std::domain_error("psi_map: quad_order must be >= 8");
  constexpr double pi = 3.14159265358979323846;
  const auto gh = detail::gauss_hermite(quad_order);
  double acc = 0.0;
  for (std::size_t k = 0; k < gh.nodes.size(); ++k)
    acc += gh.weights[k] * phi_map(map, 2.0 * gh.nodes[k] + z);
  return acc / std::sqrt(pi);
}

/// Explicit polynomial for Psi when Phi(z) = z^(2k-1) (p = 2k even, d = 1):
///   Psi(z) = sum_{j=0}^{k-1} C(2k-1, 2j) * m_{2j} * z^(2k-1-2j),
/// with m_{2j} the Gaussian moments above.  k = 2 gives z^3 + 6 z.
inline double psi_closed_form(int k, double z) {
  if (k < 1) throw std::domain_error("psi_closed_form: k must be >= 1");
  double acc = 0.0;
  for (int j = 0; j <= k - 1; ++j) {
    double binom = 1.0;
    for (int i = 1; i <= 2 * j; ++i)
      binom = binom * (2.0 * k - 2.0 * j + i - 1.0) / i;  // C(2k-1, 2j)
    acc += binom * gaussian_moment(2 * j) * std::pow(z, 2 * k - 1 - 2 * j);
  }
  return acc;
}

}  // namespace flocklab
