// Communication weight psi(r): maps the distance between an agent and the
// retarded position of a neighbor to a coupling strength in [0, 1]. All
// supported families are globally Lipschitz; the Lipschitz bound feeds the
// fixed-point contraction estimate and the certificate machinery.
#pragma once

#include <functional>
#include <string>
#include <vector>

namespace flock {

class InfluenceFunction {
 public:
  enum class Kind { PowerLaw, Constant, Tabulated };

  // psi(r) = (1 + r^2)^(-beta), beta >= 0. Nonincreasing, psi(0) = 1.
  static InfluenceFunction power_law(double beta);

  // psi(r) = level, with level in (0, 1].
  static InfluenceFunction constant(double level);

  // Piecewise-linear interpolation of (abscissa, value) knots with constant
  // extrapolation on both sides. Abscissae strictly increasing and >= 0;
  // values in [0, 1].
  static InfluenceFunction tabulated(std::vector<double> abscissae,
                                     std::vector<double> values);

  // Evaluates psi at distance r >= 0 (finite). Result lies in [0, 1].
  double operator()(double r) const;

  // Upper bound on sup_r |psi'(r)|. Exact for all three families: the power
  // law admits a closed form, constants are flat, and tabulated kernels take
  // the steepest segment slope.
  double lipschitz_bound() const;

  // True when the kernel is nonincreasing on [0, inf). Power laws and
  // constants always are; tabulated kernels are checked knot-by-knot.
  bool nonincreasing() const;

  Kind kind() const { return kind_; }
  double beta() const { return beta_; }    // PowerLaw only
  double level() const { return level_; }  // Constant only
  const std::vector<double>& abscissae() const { return abscissae_; }
  const std::vector<double>& values() const { return values_; }

 private:
  InfluenceFunction() = default;

  Kind kind_ = Kind::Constant;
  double beta_ = 0.0;
  double level_ = 1.0;
  std::vector<double> abscissae_;
  std::vector<double> values_;
};

// Nonincreasing envelope Psi(u) = min over [0, u] of psi, sampled as a running
// minimum on the uniform grid {0, h_grid, 2*h_grid, ..., s_max} and returned
// as a tabulated kernel (constant beyond s_max). Certificates built from a
// non-monotone kernel must use this envelope; s_max and h_grid are reported
// alongside any result that depends on it.
InfluenceFunction nonincreasing_envelope(const std::function<double(double)>& psi,
                                         double s_max, double h_grid);
InfluenceFunction nonincreasing_envelope(const InfluenceFunction& psi,
                                         double s_max, double h_grid);

}  // namespace flock
