#include "flocksim/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "flocksim/error.hpp"
#include "flocksim/util.hpp"

namespace flock {
namespace {

constexpr double kEtaLo = 1e-6;
constexpr double kEtaHi = 1.0 - 1e-6;
// Largest speed gap c - s probed by any bracket or feasibility search.
constexpr double kMaxSpeedGap = 1e12;

// a <= b with relative slack, so conditions that hold with exact equality in
// real arithmetic survive the rounding of their own construction.
bool leq_tol(double a, double b) {
  const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return a <= b + 1e-12 * scale;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ConditionEval {
  double tau = 0.0;
  double psi = 0.0;
  double growth_lhs = 0.0;   // L_v0*tau + (kappa+sigma)*(e^{eta tau}-1)/eta
  double damping_lhs = 0.0;  // 2*kappa/(psi - eta), valid only when psi > eta
  bool growth_ok = false;
  bool damping_ok = false;
};

ConditionEval evaluate_conditions(const InfluenceFunction& envelope, double dX0,
                                  double dV0, double s, double L_v0, double eta,
                                  double sigma, double kappa, double c) {
  ConditionEval out;
  out.tau = (dX0 + sigma / eta) / (c - s);
  out.psi = envelope(c * out.tau);
  out.growth_lhs = L_v0 * out.tau + (kappa + sigma) * std::expm1(eta * out.tau) / eta;
  out.growth_ok = leq_tol(out.growth_lhs, kappa);
  if (out.psi > eta) {
    out.damping_lhs = 2.0 * kappa / (out.psi - eta);
    out.damping_ok = leq_tol(out.damping_lhs, sigma - dV0);
  }
  return out;
}

std::vector<double> default_epsilon_menu() {
  std::vector<double> menu;
  for (int k = 0; k < 8; ++k) menu.push_back(std::ldexp(1.0, -k));  // 1, 1/2, ..., 1/128
  return menu;
}

std::vector<double> default_sigma_menu(double dV0) {
  if (dV0 > 0.0) return {1.1 * dV0, 1.25 * dV0, 1.5 * dV0, 2.0 * dV0};
  return {1e-3, 1e-2, 0.1, 1.0};
}

void validate_diameters(double dX0, double dV0) {
  require(std::isfinite(dX0) && dX0 >= 0.0, ErrorCode::Usage,
          "initial position diameter must be finite and nonnegative, got " +
              format_double(dX0));
  require(std::isfinite(dV0) && dV0 >= 0.0, ErrorCode::Usage,
          "initial velocity diameter must be finite and nonnegative, got " +
              format_double(dV0));
}

void validate_speed_bound(double s) {
  require(std::isfinite(s) && s >= 0.0, ErrorCode::Usage,
          "initial speed bound must be finite and nonnegative, got " +
              format_double(s));
}

void validate_eta(double eta) {
  require(std::isfinite(eta) && eta > 0.0 && eta < 1.0, ErrorCode::Usage,
          "decay rate must lie strictly inside (0, 1), got " + format_double(eta));
}

}  // namespace

InfluenceFunction certificate_envelope(const InfluenceFunction& kernel) {
  if (kernel.nonincreasing()) return kernel;
  // Piecewise-linear running minimum. Segments of a tabulated kernel are
  // monotone, so each contributes either the flat running level, its own
  // graph, or a flat stretch followed by the graph after the crossing point.
  const std::vector<double>& knots = kernel.abscissae();
  const std::vector<double>& vals = kernel.values();
  std::vector<double> out_s;
  std::vector<double> out_v;
  out_s.push_back(knots.front());
  out_v.push_back(vals.front());
  double level = vals.front();
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double s0 = knots[k], s1 = knots[k + 1];
    const double y0 = vals[k], y1 = vals[k + 1];
    if (y1 >= level) {
      // Segment stays at or above the running minimum: envelope is flat.
      out_s.push_back(s1);
      out_v.push_back(level);
      continue;
    }
    if (y0 > level) {
      // Falling segment that starts above the level and ends below it:
      // insert the crossing point where it meets the running minimum.
      const double cross = s0 + (y0 - level) / (y0 - y1) * (s1 - s0);
      if (cross > out_s.back() && cross < s1) {
        out_s.push_back(cross);
        out_v.push_back(level);
      }
    }
    out_s.push_back(s1);
    out_v.push_back(y1);
    level = y1;
  }
  return InfluenceFunction::tabulated(std::move(out_s), std::move(out_v));
}

std::string kernel_label(const InfluenceFunction& kernel) {
  switch (kernel.kind()) {
    case InfluenceFunction::Kind::PowerLaw:
      return "powerlaw(beta=" + format_double(kernel.beta()) + ")";
    case InfluenceFunction::Kind::Constant:
      return "constant(level=" + format_double(kernel.level()) + ")";
    case InfluenceFunction::Kind::Tabulated:
      return "tabulated(knots=" + std::to_string(kernel.abscissae().size()) + ")";
  }
  return "unknown";
}

EtaSearch find_eta(const InfluenceFunction& kernel, double dX0, double dV0) {
  validate_diameters(dX0, dV0);
  const InfluenceFunction envelope = certificate_envelope(kernel);
  auto margin = [&](double eta) { return envelope(dX0 + dV0 / eta) - eta; };

  const int n = 257;
  const double log_lo = std::log(kEtaLo);
  const double log_hi = std::log(kEtaHi);
  std::vector<double> grid(n);
  for (int k = 0; k < n; ++k) {
    grid[k] = std::exp(log_lo + (log_hi - log_lo) * double(k) / double(n - 1));
  }
  grid.front() = kEtaLo;
  grid.back() = kEtaHi;

  double best_eta = grid[0];
  double best_m = margin(grid[0]);
  int best_k = 0;
  for (int k = 1; k < n; ++k) {
    const double m = margin(grid[k]);
    if (m > best_m) {
      best_m = m;
      best_eta = grid[k];
      best_k = k;
    }
  }

  // Golden-section refinement inside the grid cells bracketing the best grid
  // point. Every probe competes against the running best, so a margin that is
  // monotone over the whole interval still returns the boundary grid point.
  double a = grid[std::max(0, best_k - 1)];
  double b = grid[std::min(n - 1, best_k + 1)];
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - gr * (b - a);
  double x2 = a + gr * (b - a);
  double f1 = margin(x1);
  double f2 = margin(x2);
  auto consider = [&](double eta, double m) {
    if (m > best_m) {
      best_m = m;
      best_eta = eta;
    }
  };
  consider(x1, f1);
  consider(x2, f2);
  for (int it = 0; it < 200 && (b - a) > 1e-15 * std::max(1.0, std::fabs(b)); ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = margin(x2);
      consider(x2, f2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = margin(x1);
      consider(x1, f1);
    }
  }

  EtaSearch result;
  result.feasible = best_m > 0.0;
  result.eta = best_eta;
  result.margin = best_m;
  return result;
}

CertificateResult critical_speed_constant_data(const InfluenceFunction& kernel,
                                               double dX0, double dV0, double s,
                                               double eta,
                                               const RecipeOptions& options) {
  validate_diameters(dX0, dV0);
  validate_speed_bound(s);
  validate_eta(eta);

  const InfluenceFunction envelope = certificate_envelope(kernel);
  const std::vector<double> eps_menu =
      options.epsilon_menu.empty() ? default_epsilon_menu() : options.epsilon_menu;
  const std::vector<double> sigma_menu =
      options.sigma_menu.empty() ? default_sigma_menu(dV0) : options.sigma_menu;
  for (double e : eps_menu) {
    require(std::isfinite(e) && e > 0.0, ErrorCode::Usage,
            "epsilon menu entries must be positive, got " + format_double(e));
  }

  CertificateResult result;
  result.eta_grid = {eta};
  result.epsilon_grid = eps_menu;
  result.sigma_grid = sigma_menu;

  // Keep the admissible (epsilon, sigma) pair with the largest kappa; the
  // first pair in scan order wins ties, and the menus are ordered so that
  // ties prefer the largest epsilon (which never increases c_star).
  bool found = false;
  double best_eps = 0.0, best_sigma = 0.0, best_kappa = 0.0;
  double best_near_margin = -std::numeric_limits<double>::infinity();
  for (double e : eps_menu) {
    for (double sigma : sigma_menu) {
      if (!(sigma > dV0)) continue;
      const double reach = (1.0 + e) * (dX0 + sigma / eta);
      const double psi_reach = envelope(reach);
      best_near_margin = std::max(best_near_margin, psi_reach - eta);
      if (!(psi_reach > eta)) continue;
      const double kappa = 0.5 * (sigma - dV0) * (psi_reach - eta);
      if (!found || kappa > best_kappa) {
        found = true;
        best_eps = e;
        best_sigma = sigma;
        best_kappa = kappa;
      }
    }
  }
  if (!found) {
    result.reason =
        "no (epsilon, sigma) menu pair keeps the kernel envelope above eta=" +
        format_double(eta) + " at the inflated interaction distance; best margin " +
        format_double(best_near_margin);
    return result;
  }

  // Critical-speed equation: the left side is constant in c, the right side
  // (dX0 + sigma/eta)/(c - s) decreases strictly from +inf to 0 on c > s, so
  // the root is unique. Bisect on the gap c - s to stay accurate when s is
  // large; the bracket starts at gap = s*1e-6 (or 1e-6 when s = 0) and is
  // widened/narrowed geometrically until it straddles the root.
  const double lhs = std::log1p(eta * best_kappa / (best_kappa + best_sigma)) / eta;
  const double u = dX0 + best_sigma / eta;
  if (!(lhs > 0.0)) {
    throw std::logic_error("critical-speed equation has nonpositive left side");
  }
  double gap_lo = s > 0.0 ? s * 1e-6 : 1e-6;
  int guard = 0;
  while (u / gap_lo <= lhs && guard++ < 2000) gap_lo *= 0.5;
  if (u / gap_lo <= lhs) {
    throw std::logic_error("critical-speed bracket: lower end never feasible");
  }
  double gap_hi = gap_lo;
  guard = 0;
  while (u / gap_hi > lhs && guard++ < 2000) {
    gap_hi *= 2.0;
    if (gap_hi > kMaxSpeedGap) {
      throw std::logic_error("critical-speed bracket exceeded the searched range");
    }
  }
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (gap_lo + gap_hi);
    if (mid == gap_lo || mid == gap_hi) break;
    if (u / mid > lhs) {
      gap_lo = mid;
    } else {
      gap_hi = mid;
    }
    if (gap_hi - gap_lo <= 1e-15 * gap_hi) break;
  }
  const double c1 = s + 0.5 * (gap_lo + gap_hi);
  const double c_star = std::max(c1, (1.0 + best_eps) / best_eps * s);

  FlockingCertificate cert;
  cert.eta = eta;
  cert.epsilon = best_eps;
  cert.sigma = best_sigma;
  cert.kappa = best_kappa;
  cert.c1 = c1;
  cert.c_star = c_star;
  cert.tau_star = u / (c_star - s);
  cert.psi_star = envelope(c_star * cert.tau_star);
  cert.inputs.dX0 = dX0;
  cert.inputs.dV0 = dV0;
  cert.inputs.s = s;
  cert.inputs.L_v0 = 0.0;
  cert.inputs.D0 = 0.0;
  cert.inputs.kernel = kernel;
  cert.inputs.kernel_id = kernel_label(kernel);

  std::string why;
  if (!certificate_conditions_hold(cert, c_star, &why)) {
    throw std::logic_error("constant-data certificate failed re-validation: " + why);
  }
  result.feasible = true;
  result.certificate = cert;
  return result;
}

bool certificate_conditions_hold(const FlockingCertificate& cert, double c,
                                 std::string* why) {
  require(std::isfinite(c) && c > cert.inputs.s, ErrorCode::Usage,
          "condition check requires a speed above the initial speed bound " +
              format_double(cert.inputs.s) + ", got " + format_double(c));
  const InfluenceFunction envelope = certificate_envelope(cert.inputs.kernel);
  const ConditionEval eval = evaluate_conditions(
      envelope, cert.inputs.dX0, cert.inputs.dV0, cert.inputs.s, cert.inputs.L_v0,
      cert.eta, cert.sigma, cert.kappa, c);
  if (!eval.growth_ok && why != nullptr) {
    *why = "growth condition fails at c=" + format_double(c) + ": lhs " +
           format_double(eval.growth_lhs) + " > kappa " + format_double(cert.kappa);
  }
  if (eval.growth_ok && !eval.damping_ok && why != nullptr) {
    *why = (eval.psi > cert.eta)
               ? "damping condition fails at c=" + format_double(c) + ": lhs " +
                     format_double(eval.damping_lhs) + " > sigma-dV0 " +
                     format_double(cert.sigma - cert.inputs.dV0)
               : "kernel floor " + format_double(eval.psi) +
                     " does not exceed eta " + format_double(cert.eta);
  }
  return eval.growth_ok && eval.damping_ok;
}

bool monotone_speed_extension(const FlockingCertificate& cert, double c) {
  require(std::isfinite(c) && c >= cert.c_star, ErrorCode::Usage,
          "speed extension requires c >= c_star = " + format_double(cert.c_star) +
              ", got " + format_double(c));
  return certificate_conditions_hold(cert, c, nullptr);
}

CertificateResult feasibility_nonconstant(const InfluenceFunction& kernel,
                                          double dX0, double dV0, double s,
                                          double L_v0, double D0,
                                          const RecipeOptions& options) {
  validate_diameters(dX0, dV0);
  validate_speed_bound(s);
  require(std::isfinite(L_v0) && L_v0 >= 0.0, ErrorCode::Usage,
          "initial velocity Lipschitz bound must be finite and nonnegative, got " +
              format_double(L_v0));
  require(std::isfinite(D0) && D0 >= 0.0, ErrorCode::Usage,
          "initial drift must be finite and nonnegative, got " + format_double(D0));

  const InfluenceFunction envelope = certificate_envelope(kernel);

  // Eta grid: log-spaced plus the find_eta maximizer, so the search space
  // contains the point the constant-data recipe would use.
  std::vector<double> eta_grid;
  const int n_eta = 48;
  const double log_lo = std::log(kEtaLo);
  const double log_hi = std::log(kEtaHi);
  for (int k = 0; k < n_eta; ++k) {
    eta_grid.push_back(std::exp(log_lo + (log_hi - log_lo) * double(k) / double(n_eta - 1)));
  }
  eta_grid.front() = kEtaLo;
  eta_grid.back() = kEtaHi;
  const EtaSearch eta_best = find_eta(kernel, dX0, dV0);
  if (eta_best.feasible) eta_grid.push_back(eta_best.eta);
  std::sort(eta_grid.begin(), eta_grid.end());
  eta_grid.erase(std::unique(eta_grid.begin(), eta_grid.end()), eta_grid.end());

  const std::vector<double> sigma_grid =
      options.sigma_menu.empty() ? default_sigma_menu(dV0) : options.sigma_menu;

  CertificateResult result;
  result.eta_grid = eta_grid;
  result.sigma_grid = sigma_grid;

  struct PairOutcome {
    bool feasible = false;
    double c = std::numeric_limits<double>::infinity();
    double eta = 0.0, sigma = 0.0, kappa = 0.0, tau = 0.0, psi = 0.0;
    double near_margin = -std::numeric_limits<double>::infinity();
  };

  // Feasibility at one speed: the damping condition caps kappa at kappa_max,
  // the growth condition demands kappa >= kappa_need (only meaningful while
  // A = (e^{eta tau}-1)/eta < 1), and the drift hypothesis demands
  // kappa > D0. Every bound relaxes monotonically as c grows, so the set of
  // certified speeds is an interval (c_min, inf) and bisection applies.
  auto probe = [&](double eta, double sigma, double c, double* kappa_out,
                   double* tau_out, double* psi_out) -> bool {
    const double tau = (dX0 + sigma / eta) / (c - s);
    if (!std::isfinite(tau) || !std::isfinite(c * tau)) return false;
    const double psi = envelope(c * tau);
    if (!(psi > eta)) return false;
    const double kappa_max = 0.5 * (sigma - dV0) * (psi - eta);
    if (!(kappa_max > D0)) return false;
    const double amp = std::expm1(eta * tau) / eta;
    if (!(amp < 1.0)) return false;
    const double kappa_need = (L_v0 * tau + sigma * amp) / (1.0 - amp);
    if (!leq_tol(kappa_need, kappa_max)) return false;
    if (kappa_out != nullptr) {
      *kappa_out = 0.5 * (std::max(D0, kappa_need) + kappa_max);
      *tau_out = tau;
      *psi_out = psi;
    }
    return true;
  };

  std::vector<std::pair<double, double>> pairs;
  for (double eta : eta_grid) {
    for (double sigma : sigma_grid) {
      if (sigma > dV0) pairs.emplace_back(eta, sigma);
    }
  }
  if (pairs.empty()) {
    result.reason = "no sigma grid entry exceeds the initial velocity diameter " +
                    format_double(dV0);
    return result;
  }

  std::vector<PairOutcome> outcomes(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), [&](int idx) {
    const double eta = pairs[static_cast<std::size_t>(idx)].first;
    const double sigma = pairs[static_cast<std::size_t>(idx)].second;
    PairOutcome& out = outcomes[static_cast<std::size_t>(idx)];
    out.eta = eta;
    out.sigma = sigma;

    // Quick reject using the c -> inf limit: the kernel floor can never
    // exceed its value at the un-inflated distance dX0 + sigma/eta.
    const double limit_psi = envelope(dX0 + sigma / eta);
    out.near_margin = std::min(limit_psi - eta, 0.5 * (sigma - dV0) * (limit_psi - eta) - D0);
    if (!(limit_psi > eta)) return;
    if (!(0.5 * (sigma - dV0) * (limit_psi - eta) > D0)) return;

    const double seed = s > 0.0 ? s * 1e-6 : 1e-6;
    double gap_hi = seed;
    bool found = false;
    while (gap_hi <= kMaxSpeedGap) {
      if (probe(eta, sigma, s + gap_hi, nullptr, nullptr, nullptr)) {
        found = true;
        break;
      }
      gap_hi *= 2.0;
    }
    if (!found) return;
    double gap_lo;
    if (gap_hi == seed) {
      // The seed itself is feasible; descend until a speed fails so the
      // bisection bracket genuinely straddles the feasibility boundary.
      gap_lo = 0.5 * seed;
      int down = 0;
      while (down++ < 2000 && gap_lo > 0.0 &&
             probe(eta, sigma, s + gap_lo, nullptr, nullptr, nullptr)) {
        gap_hi = gap_lo;
        gap_lo *= 0.5;
      }
    } else {
      gap_lo = gap_hi * 0.5;  // probed infeasible during the doubling pass
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (gap_lo + gap_hi);
      if (mid <= gap_lo || mid >= gap_hi) break;
      if (probe(eta, sigma, s + mid, nullptr, nullptr, nullptr)) {
        gap_hi = mid;
      } else {
        gap_lo = mid;
      }
      if (gap_hi - gap_lo <= 1e-9 * gap_hi) break;
    }
    out.feasible = probe(eta, sigma, s + gap_hi, &out.kappa, &out.tau, &out.psi);
    out.c = s + gap_hi;
  });

  int best = -1;
  double best_near = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const PairOutcome& out = outcomes[k];
    best_near = std::max(best_near, out.near_margin);
    if (out.feasible && (best < 0 || out.c < outcomes[static_cast<std::size_t>(best)].c)) {
      best = static_cast<int>(k);
    }
  }
  if (best < 0) {
    result.reason =
        "no (eta, sigma) grid point admits a certified speed below the search cap; "
        "best limiting margin " + format_double(best_near);
    return result;
  }

  const PairOutcome& win = outcomes[static_cast<std::size_t>(best)];
  FlockingCertificate cert;
  cert.eta = win.eta;
  // The grid search inflates the interaction distance only through the speed
  // ratio c/(c - s), so the effective inflation factor is s/(c - s); when
  // s = 0 there is no inflation and any positive epsilon is valid.
  cert.epsilon = s > 0.0 ? s / (win.c - s) : 1.0;
  cert.sigma = win.sigma;
  cert.kappa = win.kappa;
  cert.tau_star = win.tau;
  cert.psi_star = win.psi;
  cert.c1 = win.c;
  cert.c_star = win.c;
  cert.inputs.dX0 = dX0;
  cert.inputs.dV0 = dV0;
  cert.inputs.s = s;
  cert.inputs.L_v0 = L_v0;
  cert.inputs.D0 = D0;
  cert.inputs.kernel = kernel;
  cert.inputs.kernel_id = kernel_label(kernel);

  std::string why;
  if (!certificate_conditions_hold(cert, cert.c_star, &why)) {
    throw std::logic_error("feasibility search emitted an invalid certificate: " + why);
  }
  result.feasible = true;
  result.certificate = cert;
  return result;
}

}  // namespace flock
