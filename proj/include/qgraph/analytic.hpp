// Closed forms for two particles on a translation-invariant chain, used as
// oracles and large-N limits for the finite-graph solvers.
#pragma once

#include <cmath>
#include <numbers>

#include "qgraph/error.hpp"

namespace qgraph::analytic {

/// Paired state with centre-of-mass parameter p; relative wavefunction
/// f(z) = rho^|z|. `limit` marks the rho -> 1 boundary (g = 0), where the
/// pair is no longer bound.
struct PairBandPoint {
  double p = 0.0;
  double energy = 0.0;
  double rho = 0.0;
  bool limit = false;
};

/// Attractive Hubbard pair band: E_p = -sqrt(g^2 + 16 K^2 cos^2 p).
inline PairBandPoint hubbard_pair_band(double p, double g, double hopping = 1.0) {
  if (!(std::abs(p) < std::numbers::pi / 2))
    throw ValidationError("hubbard pair band", {"|p| must be below pi/2"});
  if (g < 0.0) throw ValidationError("hubbard pair band", {"g must be nonnegative"});
  if (!(hopping > 0.0)) throw ValidationError("hubbard pair band", {"hopping must be positive"});
  const double c = std::cos(p);
  const double e = -std::sqrt(g * g + 16.0 * hopping * hopping * c * c);
  const double mag = std::abs(e);
  return {p, e, std::sqrt((mag - g) / (mag + g)), g == 0.0};
}

/// Energy range [bottom, top] of the Hubbard pair band.
inline double hubbard_band_bottom(double g, double hopping = 1.0) { return -std::sqrt(g * g + 16.0 * hopping * hopping); }
inline double hubbard_band_top(double g) { return -g; }

struct BoundState {
  double energy = 0.0;
  double rho = 0.0;
};

/// BCS-like bound state of a periodic chain with effective strength G = gN.
inline BoundState bcs_bound_state(double effective_g, double hopping = 1.0) {
  if (!(effective_g > 0.0)) throw ValidationError("bcs bound state", {"G must be positive"});
  if (!(hopping > 0.0)) throw ValidationError("bcs bound state", {"hopping must be positive"});
  const double mag = std::sqrt(effective_g * effective_g + 16.0 * hopping * hopping);
  return {-mag, std::sqrt((mag - effective_g) / (mag + effective_g))};
}

/// Large-N depairing energy sqrt(G^2 + 16 K^2) - 4K.
inline double bcs_depairing_thermodynamic(double effective_g, double hopping = 1.0) {
  if (effective_g < 0.0) throw ValidationError("bcs depairing", {"G must be nonnegative"});
  return std::sqrt(effective_g * effective_g + 16.0 * hopping * hopping) - 4.0 * hopping;
}

}  // namespace qgraph::analytic
