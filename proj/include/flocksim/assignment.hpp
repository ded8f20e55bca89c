// Exact linear assignment: given a square cost matrix, find the permutation
// matching every row to a distinct column with minimal total cost. This is
// the combinatorial core of the transport distance between equal-weight
// atomic ensembles.
#pragma once

#include <vector>

namespace flock {

struct AssignmentResult {
  double total_cost = 0.0;
  std::vector<int> column_of_row;  // column_of_row[i] = column matched to row i
};

// O(n^3) shortest-augmenting-path (Hungarian) solver. `cost` is row-major
// n x n with finite entries. The permutation found is an exact optimum; the
// reported total re-sums the original matrix entries along the match, so it
// carries only the rounding of one n-term sum.
AssignmentResult solve_assignment(const std::vector<double>& cost, int n);

// Brute-force reference: minimum over all n! permutations. Guarded to
// n <= 10; intended for tests that certify the solver.
AssignmentResult assignment_brute_force(const std::vector<double>& cost, int n);

}  // namespace flock
