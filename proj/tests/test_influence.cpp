#include <cmath>
#include <vector>

#include "doctest.h"
#include "flocksim/error.hpp"
#include "flocksim/influence.hpp"

using namespace flock;

TEST_CASE("power-law kernel values and normalization") {
  const InfluenceFunction psi = InfluenceFunction::power_law(0.5);
  CHECK(psi(0.0) == 1.0);
  CHECK(psi(1.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(psi(3.0) == doctest::Approx(1.0 / std::sqrt(10.0)).epsilon(1e-15));
  CHECK(psi.nonincreasing());

  // beta = 0 degenerates to the constant kernel 1.
  const InfluenceFunction flat = InfluenceFunction::power_law(0.0);
  CHECK(flat(0.0) == 1.0);
  CHECK(flat(100.0) == 1.0);
}

TEST_CASE("power-law Lipschitz bound is the exact max slope") {
  // |psi'(s)| = 2 beta s (1+s^2)^(-beta-1) peaks at s* = 1/sqrt(1+2 beta).
  const double beta = 0.5;
  const InfluenceFunction psi = InfluenceFunction::power_law(beta);
  const double expected = 2.0 / (3.0 * std::sqrt(3.0));
  CHECK(psi.lipschitz_bound() == doctest::Approx(expected).epsilon(1e-14));

  // The bound dominates every finite-difference slope.
  double worst = 0.0;
  for (int k = 0; k < 4000; ++k) {
    const double s = 0.002 * k;
    const double slope = std::abs(psi(s + 1e-6) - psi(s)) / 1e-6;
    worst = std::max(worst, slope);
  }
  CHECK(worst <= psi.lipschitz_bound() + 1e-9);
}

TEST_CASE("constant kernel validation") {
  const InfluenceFunction one = InfluenceFunction::constant(1.0);
  CHECK(one(17.0) == 1.0);
  CHECK(one.lipschitz_bound() == 0.0);
  CHECK_THROWS_AS(InfluenceFunction::constant(1.5), Error);
  CHECK_THROWS_AS(InfluenceFunction::constant(-0.1), Error);
  CHECK_THROWS_AS(InfluenceFunction::power_law(-1.0), Error);
}

TEST_CASE("tabulated kernel interpolates and extrapolates flat") {
  const InfluenceFunction psi =
      InfluenceFunction::tabulated({0.0, 1.0, 2.0}, {1.0, 0.4, 0.1});
  CHECK(psi(0.0) == 1.0);
  CHECK(psi(0.5) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(psi(1.5) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(psi(5.0) == 0.1);   // flat beyond the last knot
  CHECK(psi.nonincreasing());
  CHECK(psi.lipschitz_bound() == doctest::Approx(0.6).epsilon(1e-15));

  CHECK_THROWS_AS(InfluenceFunction::tabulated({1.0, 0.5}, {1.0, 0.5}), Error);
  CHECK_THROWS_AS(InfluenceFunction::tabulated({0.0, 1.0}, {1.0, 1.5}), Error);
  CHECK_THROWS_AS(InfluenceFunction::tabulated({0.0}, {1.0, 0.5}), Error);
}

TEST_CASE("non-monotone tabulated kernels are allowed but flagged") {
  const InfluenceFunction bump =
      InfluenceFunction::tabulated({0.0, 1.0, 2.0}, {0.5, 0.9, 0.2});
  CHECK_FALSE(bump.nonincreasing());
  CHECK(bump(1.0) == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("grid envelope lower-bounds the kernel") {
  const InfluenceFunction bump =
      InfluenceFunction::tabulated({0.0, 1.0, 2.0}, {0.5, 0.9, 0.2});
  const auto env = nonincreasing_envelope(bump, 3.0, 1e-3);
  // Envelope of the running minimum: stays 0.5 through the bump, then falls.
  CHECK(env(0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(env(1.5) <= 0.5 + 1e-12);
  CHECK(env(2.0) == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(env(3.5) == doctest::Approx(0.2).epsilon(1e-6));  // flat past s_max
}
