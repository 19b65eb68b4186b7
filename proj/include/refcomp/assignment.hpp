#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

namespace refcomp {

struct AssignmentResult {
  std::vector<int> row_to_col;
  double cost = 0.0;
};

/// Exact solver for the square linear assignment problem (Kuhn-Munkres with
/// potentials and shortest augmenting paths, O(n^3)). cost is row-major n x n.
inline AssignmentResult solve_assignment(const std::vector<double>& cost, int n) {
  if (n < 1) throw std::invalid_argument("solve_assignment: n must be positive");
  if (cost.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("solve_assignment: cost matrix is not n x n");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(n) + 1, 0);  // col -> row, 1-based
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> min_v(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      int i0 = match[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] -
                     u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < min_v[static_cast<std::size_t>(j)]) {
          min_v[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (min_v[static_cast<std::size_t>(j)] < delta) {
          delta = min_v[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          min_v[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  AssignmentResult res;
  res.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (match[static_cast<std::size_t>(j)] > 0)
      res.row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] =
          j - 1;
  for (int i = 0; i < n; ++i)
    res.cost += cost[static_cast<std::size_t>(i) * n +
                     res.row_to_col[static_cast<std::size_t>(i)]];
  return res;
}

}  // namespace refcomp
