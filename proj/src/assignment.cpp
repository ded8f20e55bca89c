#include "flocksim/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>

#include "flocksim/error.hpp"

namespace flock {
namespace {

void validate_matrix(const std::vector<double>& cost, int n) {
  require(n >= 1, ErrorCode::Usage, "assignment needs at least one row, got n=" +
                                        std::to_string(n));
  require(cost.size() == static_cast<std::size_t>(n) * static_cast<std::size_t>(n),
          ErrorCode::Usage,
          "assignment cost matrix must be n*n = " + std::to_string(n * n) +
              " entries, got " + std::to_string(cost.size()));
  for (std::size_t k = 0; k < cost.size(); ++k) {
    require(std::isfinite(cost[k]), ErrorCode::Usage,
            "assignment cost entry " + std::to_string(k) + " is not finite");
  }
}

double resum_along(const std::vector<double>& cost, int n,
                   const std::vector<int>& column_of_row) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += cost[static_cast<std::size_t>(i) * n + column_of_row[i]];
  }
  return total;
}

}  // namespace

AssignmentResult solve_assignment(const std::vector<double>& cost, int n) {
  validate_matrix(cost, n);
  const double kInf = std::numeric_limits<double>::infinity();

  // Shortest augmenting paths with dual potentials (u, v); p[j] is the row
  // currently matched to column j, with column 0 as the virtual root.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  auto entry = [&](int i, int j) {
    return cost[static_cast<std::size_t>(i - 1) * n + (j - 1)];
  };
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = entry(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult result;
  result.column_of_row.assign(n, -1);
  for (int j = 1; j <= n; ++j) result.column_of_row[p[j] - 1] = j - 1;
  result.total_cost = resum_along(cost, n, result.column_of_row);
  return result;
}

AssignmentResult assignment_brute_force(const std::vector<double>& cost, int n) {
  validate_matrix(cost, n);
  require(n <= 10, ErrorCode::Usage,
          "brute-force assignment is limited to n <= 10, got n=" + std::to_string(n));
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  AssignmentResult best;
  best.total_cost = std::numeric_limits<double>::infinity();
  do {
    const double total = resum_along(cost, n, perm);
    if (total < best.total_cost) {
      best.total_cost = total;
      best.column_of_row = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace flock
