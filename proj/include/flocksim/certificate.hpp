// Flocking certificates: computable witnesses that a delayed-interaction
// flock aligns exponentially fast. A certificate fixes a decay rate eta and
// envelope amplitudes (sigma, kappa) together with a propagation speed
// c_star such that for every speed c >= c_star the run satisfies
//
//   dV(t) < sigma * exp(-eta t),   D(t) < kappa * exp(-eta t),
//   dX(t) < dX0 + sigma / eta,
//
// where dX/dV are the position/velocity diameters and D the retardation
// drift (see diagnostics.hpp). Certification rests on two scalar conditions
// evaluated at the worst-case delay bound tau = (dX0 + sigma/eta)/(c - s):
//
//   [growth]   L_v0 * tau + (kappa + sigma) * (exp(eta*tau) - 1)/eta <= kappa
//   [damping]  psi(c * tau) > eta  and  2*kappa / (psi(c*tau) - eta) <= sigma - dV0
//
// Both become easier to satisfy as c grows, which makes "certified at c"
// monotone in c and the critical speed well defined.
#pragma once

#include <string>
#include <vector>

#include "flocksim/influence.hpp"

namespace flock {

// Snapshot of the data a certificate was issued for. `s` bounds the speed of
// every initial path, `L_v0` is a Lipschitz constant for the initial
// velocities on (-inf, 0], `D0` the retardation drift at t = 0, and
// dX0 / dV0 the initial position / velocity diameters.
struct CertificateInputs {
  double dX0 = 0.0;
  double dV0 = 0.0;
  double s = 0.0;
  double L_v0 = 0.0;
  double D0 = 0.0;
  InfluenceFunction kernel = InfluenceFunction::constant(1.0);
  std::string kernel_id = "constant(level=1)";
};

// Witness for exponential alignment at propagation speeds c >= c_star.
// Invariants (re-checkable with certificate_conditions_hold):
//   0 < eta < 1, sigma > dV0, kappa > D0, c_star > s,
//   tau_star == (dX0 + sigma/eta) / (c_star - s),
//   psi_star == envelope(c_star * tau_star) > eta,
//   growth and damping conditions hold at c_star.
struct FlockingCertificate {
  double eta = 0.0;       // exponential decay rate
  double epsilon = 0.0;   // delay inflation: c_star*tau_star <= (1+epsilon)*(dX0 + sigma/eta)
  double sigma = 0.0;     // velocity-diameter envelope amplitude
  double kappa = 0.0;     // drift envelope amplitude
  double tau_star = 0.0;  // uniform delay bound at speed c_star
  double psi_star = 0.0;  // kernel floor at the worst-case interaction distance
  double c1 = 0.0;        // root of the critical-speed equation
  double c_star = 0.0;    // certified propagation speed
  CertificateInputs inputs;
};

// Outcome of the decay-rate search: the eta in (1e-6, 1-1e-6) maximizing
// margin(eta) = envelope(dX0 + dV0/eta) - eta. Feasible iff the margin is
// strictly positive. The search evaluates a logarithmic grid and refines the
// best cell by golden section, returning the best point ever probed (for a
// monotone margin this is the boundary grid point itself).
struct EtaSearch {
  bool feasible = false;
  double eta = 0.0;
  double margin = 0.0;
};

EtaSearch find_eta(const InfluenceFunction& kernel, double dX0, double dV0);

// Scan menus for the constant-data recipe and the feasibility search. Empty
// vectors select the defaults:
//   epsilon_menu: {1, 1/2, 1/4, ..., 1/128}
//   sigma_menu:   dV0 * {1.1, 1.25, 1.5, 2}, or {1e-3, 1e-2, 0.1, 1} when dV0 == 0
struct RecipeOptions {
  std::vector<double> epsilon_menu;
  std::vector<double> sigma_menu;
};

// Search result. `certificate` is meaningful only when feasible; `reason`
// explains an infeasible outcome (including the best near-miss margins).
// The grids echo the exact search space so results are reproducible.
struct CertificateResult {
  bool feasible = false;
  FlockingCertificate certificate;
  std::string reason;
  std::vector<double> eta_grid;
  std::vector<double> epsilon_grid;
  std::vector<double> sigma_grid;
};

// Recipe for constant initial velocities (L_v0 = 0, D0 = 0). Scans the
// (epsilon, sigma) menus for pairs with envelope((1+epsilon)*(dX0+sigma/eta))
// strictly above eta, keeps the pair maximizing
//   kappa = (sigma - dV0)/2 * [envelope((1+epsilon)*(dX0+sigma/eta)) - eta],
// then solves
//   (1/eta)*ln(eta*kappa/(kappa+sigma) + 1) = (dX0 + sigma/eta)/(c - s)
// for c1 by bisection (the right side decreases strictly from +inf to 0 on
// c in (s, s + 1e12]), sets c_star = max(c1, (1+epsilon)/epsilon * s), and
// re-validates both certificate conditions at c_star.
CertificateResult critical_speed_constant_data(const InfluenceFunction& kernel,
                                               double dX0, double dV0, double s,
                                               double eta,
                                               const RecipeOptions& options = {});

// Re-checks the growth and damping conditions at speed c >= cert.c_star with
// tau(c) = (dX0 + sigma/eta)/(c - s). Both conditions relax as c grows, so
// this returns true for every valid certificate; it is the executable witness
// of that monotonicity. Raises a usage error when c < cert.c_star.
bool monotone_speed_extension(const FlockingCertificate& cert, double c);

// Evaluates both certificate conditions at speed c > s using the stored
// (eta, sigma, kappa) and the kernel envelope. Comparisons carry a 1e-12
// relative slack so conditions constructed to hold with equality re-validate
// cleanly. When `why` is non-null it receives a short diagnostic on failure.
bool certificate_conditions_hold(const FlockingCertificate& cert, double c,
                                 std::string* why = nullptr);

// Feasibility search for general initial data (L_v0 >= 0, D0 >= 0). For each
// (eta, sigma) grid point with sigma > dV0 it asks for the smallest speed c
// in (s, s + 1e12] at which some kappa in (max(D0, kappa_need), kappa_max]
// satisfies both conditions, where
//   kappa_max  = (sigma - dV0) * (psi(c*tau) - eta) / 2   [damping at equality]
//   kappa_need = (L_v0*tau + sigma*A) / (1 - A),  A = (exp(eta*tau)-1)/eta
// and refines c downward by bisection (feasibility is monotone in c). The
// eta grid always contains the find_eta maximizer and the sigma grid the
// constant-data menu, so constant data certifies at c <= the recipe's c_star.
CertificateResult feasibility_nonconstant(const InfluenceFunction& kernel,
                                          double dX0, double dV0, double s,
                                          double L_v0, double D0,
                                          const RecipeOptions& options = {});

// Exact nonincreasing lower envelope of the kernel, Psi(u) = min over [0,u]
// of psi. Monotone kernels are returned unchanged; piecewise-linear kernels
// get an exact piecewise-linear envelope (a running minimum with break
// points inserted where falling segments cross the running level). All
// certificate computations evaluate the envelope, never the raw kernel, so
// non-monotone kernels are handled conservatively.
InfluenceFunction certificate_envelope(const InfluenceFunction& kernel);

// Human-readable kernel identifier, e.g. "powerlaw(beta=0.5)".
std::string kernel_label(const InfluenceFunction& kernel);

}  // namespace flock
