#include "flocksim/influence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flocksim/error.hpp"

namespace flock {

InfluenceFunction InfluenceFunction::power_law(double beta) {
  require(std::isfinite(beta) && beta >= 0.0, ErrorCode::Domain,
          "power-law exponent must be finite and >= 0, got " + std::to_string(beta));
  InfluenceFunction f;
  f.kind_ = Kind::PowerLaw;
  f.beta_ = beta;
  return f;
}

InfluenceFunction InfluenceFunction::constant(double level) {
  require(std::isfinite(level) && level > 0.0 && level <= 1.0, ErrorCode::Domain,
          "constant kernel level must lie in (0, 1], got " + std::to_string(level));
  InfluenceFunction f;
  f.kind_ = Kind::Constant;
  f.level_ = level;
  return f;
}

InfluenceFunction InfluenceFunction::tabulated(std::vector<double> abscissae,
                                               std::vector<double> values) {
  require(!abscissae.empty(), ErrorCode::Usage, "tabulated kernel needs at least one knot");
  require(abscissae.size() == values.size(), ErrorCode::Usage,
          "tabulated kernel: abscissa/value count mismatch");
  for (std::size_t i = 0; i < abscissae.size(); ++i) {
    require(std::isfinite(abscissae[i]) && abscissae[i] >= 0.0, ErrorCode::Domain,
            "tabulated kernel abscissae must be finite and >= 0");
    require(std::isfinite(values[i]) && values[i] >= 0.0 && values[i] <= 1.0,
            ErrorCode::Domain, "tabulated kernel values must lie in [0, 1]");
    if (i > 0) {
      require(abscissae[i] > abscissae[i - 1], ErrorCode::Usage,
              "tabulated kernel abscissae must be strictly increasing");
    }
  }
  InfluenceFunction f;
  f.kind_ = Kind::Tabulated;
  f.abscissae_ = std::move(abscissae);
  f.values_ = std::move(values);
  return f;
}

double InfluenceFunction::operator()(double r) const {
  require(std::isfinite(r) && r >= 0.0, ErrorCode::Domain,
          "influence function evaluated at invalid distance " + std::to_string(r));
  switch (kind_) {
    case Kind::PowerLaw:
      return std::pow(1.0 + r * r, -beta_);
    case Kind::Constant:
      return level_;
    case Kind::Tabulated: {
      if (r <= abscissae_.front()) return values_.front();
      if (r >= abscissae_.back()) return values_.back();
      const auto it = std::upper_bound(abscissae_.begin(), abscissae_.end(), r);
      const std::size_t hi = static_cast<std::size_t>(it - abscissae_.begin());
      const std::size_t lo = hi - 1;
      const double w = (r - abscissae_[lo]) / (abscissae_[hi] - abscissae_[lo]);
      return values_[lo] + w * (values_[hi] - values_[lo]);
    }
  }
  return 1.0;
}

double InfluenceFunction::lipschitz_bound() const {
  switch (kind_) {
    case Kind::PowerLaw: {
      // |psi'(r)| = 2 beta r (1 + r^2)^(-beta - 1) is maximized at
      // r* = 1 / sqrt(1 + 2 beta).
      if (beta_ == 0.0) return 0.0;
      const double r_star = 1.0 / std::sqrt(1.0 + 2.0 * beta_);
      return 2.0 * beta_ * r_star * std::pow(1.0 + r_star * r_star, -beta_ - 1.0);
    }
    case Kind::Constant:
      return 0.0;
    case Kind::Tabulated: {
      double worst = 0.0;
      for (std::size_t i = 1; i < abscissae_.size(); ++i) {
        const double slope = std::abs(values_[i] - values_[i - 1]) /
                             (abscissae_[i] - abscissae_[i - 1]);
        worst = std::max(worst, slope);
      }
      return worst;
    }
  }
  return 0.0;
}

bool InfluenceFunction::nonincreasing() const {
  switch (kind_) {
    case Kind::PowerLaw:
    case Kind::Constant:
      return true;
    case Kind::Tabulated:
      for (std::size_t i = 1; i < values_.size(); ++i) {
        if (values_[i] > values_[i - 1]) return false;
      }
      return true;
  }
  return true;
}

InfluenceFunction nonincreasing_envelope(const std::function<double(double)>& psi,
                                         double s_max, double h_grid) {
  require(std::isfinite(s_max) && s_max > 0.0, ErrorCode::Domain,
          "envelope needs s_max > 0");
  require(std::isfinite(h_grid) && h_grid > 0.0 && h_grid <= s_max, ErrorCode::Domain,
          "envelope needs 0 < h_grid <= s_max");

  const std::size_t n = static_cast<std::size_t>(std::ceil(s_max / h_grid)) + 1;
  std::vector<double> abscissae(n);
  std::vector<double> values(n);
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = std::min(static_cast<double>(i) * h_grid, s_max);
    const double v = psi(u);
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorCode::Domain,
            "envelope source must take values in [0, 1]");
    running = std::min(running, v);
    abscissae[i] = u;
    values[i] = running;
  }
  return InfluenceFunction::tabulated(std::move(abscissae), std::move(values));
}

InfluenceFunction nonincreasing_envelope(const InfluenceFunction& psi,
                                         double s_max, double h_grid) {
  return nonincreasing_envelope([&psi](double r) { return psi(r); }, s_max, h_grid);
}

}  // namespace flock
