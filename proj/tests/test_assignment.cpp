#include <cmath>
#include <vector>

#include "doctest.h"
#include "flocksim/assignment.hpp"
#include "flocksim/error.hpp"
#include "flocksim/util.hpp"

using namespace flock;

TEST_CASE("known small assignment problems") {
  // 2x2: diagonal is optimal.
  {
    const std::vector<double> cost = {1.0, 2.0, 4.0, 1.0};
    const AssignmentResult r = solve_assignment(cost, 2);
    CHECK(r.total_cost == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.column_of_row[0] == 0);
    CHECK(r.column_of_row[1] == 1);
  }
  // 2x2: anti-diagonal is optimal.
  {
    const std::vector<double> cost = {5.0, 1.0, 1.0, 5.0};
    const AssignmentResult r = solve_assignment(cost, 2);
    CHECK(r.total_cost == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.column_of_row[0] == 1);
    CHECK(r.column_of_row[1] == 0);
  }
  // 1x1.
  {
    const std::vector<double> cost = {7.5};
    const AssignmentResult r = solve_assignment(cost, 1);
    CHECK(r.total_cost == 7.5);
  }
}

TEST_CASE("hungarian matches brute force on random instances") {
  Rng rng(314, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 7;
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (double& c : cost) c = rng.uniform(0.0, 10.0);
    const AssignmentResult fast = solve_assignment(cost, n);
    const AssignmentResult slow = assignment_brute_force(cost, n);
    CHECK(fast.total_cost == doctest::Approx(slow.total_cost).epsilon(1e-12));

    // The reported permutation is valid and reproduces the reported cost.
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    double resum = 0.0;
    for (int i = 0; i < n; ++i) {
      const int j = fast.column_of_row[static_cast<std::size_t>(i)];
      REQUIRE(j >= 0);
      REQUIRE(j < n);
      CHECK_FALSE(used[static_cast<std::size_t>(j)]);
      used[static_cast<std::size_t>(j)] = true;
      resum += cost[static_cast<std::size_t>(i * n + j)];
    }
    CHECK(resum == doctest::Approx(fast.total_cost).epsilon(1e-14));
  }
}

TEST_CASE("degenerate ties still produce a valid matching") {
  const std::vector<double> cost(9, 1.0);  // all entries equal
  const AssignmentResult r = solve_assignment(cost, 3);
  CHECK(r.total_cost == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("assignment input validation") {
  CHECK_THROWS_AS(solve_assignment({}, 0), Error);
  CHECK_THROWS_AS(solve_assignment({1.0, 2.0}, 2), Error);  // wrong size
  const std::vector<double> bad = {1.0, std::nan(""), 2.0, 3.0};
  CHECK_THROWS_AS(solve_assignment(bad, 2), Error);
}
