#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "refcomp/assignment.hpp"
#include "refcomp/rng.hpp"

using namespace refcomp;

namespace {

double brute_force_min(const std::vector<double>& cost, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double acc = 0;
    for (int i = 0; i < n; ++i) acc += cost[static_cast<std::size_t>(i) * n + perm[i]];
    best = std::min(best, acc);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("known small matrices") {
  // diag is optimal
  std::vector<double> c1 = {1, 9, 9, 1};
  AssignmentResult r1 = solve_assignment(c1, 2);
  REQUIRE(r1.cost == 2.0);
  REQUIRE(r1.row_to_col == std::vector<int>{0, 1});

  // anti-diagonal is optimal
  std::vector<double> c2 = {9, 1, 1, 9};
  AssignmentResult r2 = solve_assignment(c2, 2);
  REQUIRE(r2.cost == 2.0);
  REQUIRE(r2.row_to_col == std::vector<int>{1, 0});

  // 1x1
  REQUIRE(solve_assignment({4.2}, 1).cost == 4.2);
}

TEST_CASE("solution is a permutation") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    int n = 1 + static_cast<int>(rng.below(12));
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (auto& v : cost) v = rng.uniform(0, 10);
    AssignmentResult r = solve_assignment(cost, n);
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (int col : r.row_to_col) {
      REQUIRE(col >= 0);
      REQUIRE(col < n);
      REQUIRE(!seen[static_cast<std::size_t>(col)]);
      seen[static_cast<std::size_t>(col)] = 1;
    }
  }
}

TEST_CASE("exact optimum against factorial enumeration up to 6") {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    int n = 1 + static_cast<int>(rng.below(6));
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (auto& v : cost) v = rng.uniform(0, 5);
    AssignmentResult r = solve_assignment(cost, n);
    REQUIRE(r.cost == brute_force_min(cost, n));
  }
}

TEST_CASE("never beaten by sampled permutations at larger sizes") {
  Rng rng(29);
  for (int t = 0; t < 5; ++t) {
    int n = 8 + static_cast<int>(rng.below(25));
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (auto& v : cost) v = rng.uniform(0, 1);
    AssignmentResult r = solve_assignment(cost, n);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int s = 0; s < 1000; ++s) {
      rng.shuffle(perm);
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += cost[static_cast<std::size_t>(i) * n + perm[i]];
      REQUIRE(r.cost <= acc + 1e-12);
    }
  }
}

TEST_CASE("input validation") {
  REQUIRE_THROWS_AS(solve_assignment({}, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(solve_assignment({1.0, 2.0}, 2), std::invalid_argument);
}
