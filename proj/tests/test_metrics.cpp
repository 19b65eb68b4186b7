#include <catch2/catch_amalgamated.hpp>

#include "refcomp/metrics.hpp"
#include "refcomp/rng.hpp"

using namespace refcomp;

namespace {

PointCloud cloud(std::initializer_list<Point3> pts) {
  PointCloud c;
  c.points = pts;
  return c;
}

PointCloud random_cloud(Rng& rng, int n) {
  PointCloud c;
  for (int i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  return c;
}

double oracle_min_sq(const Point3& p, const PointCloud& c) {
  double best = 1e300;
  for (const Point3& q : c.points) {
    double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
    best = std::min(best, dx * dx + dy * dy + dz * dz);
  }
  return best;
}

}  // namespace

TEST_CASE("chamfer hand cases") {
  PointCloud a = cloud({{0, 0, 0}});
  PointCloud b = cloud({{1, 0, 0}});
  REQUIRE(chamfer(a, a) == 0.0);
  REQUIRE(chamfer(a, b) == 2.0);
  REQUIRE_THROWS_AS(chamfer(a, PointCloud{}), std::invalid_argument);
}

TEST_CASE("chamfer equals the double-loop oracle") {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    PointCloud a = random_cloud(rng, 64);
    PointCloud b = random_cloud(rng, 64);
    double s1 = 0, s2 = 0;
    for (const Point3& p : a.points) s1 += oracle_min_sq(p, b);
    for (const Point3& q : b.points) s2 += oracle_min_sq(q, a);
    double want = s1 / a.size() + s2 / b.size();
    REQUIRE(chamfer(a, b) == Catch::Approx(want).epsilon(1e-12));
    REQUIRE(chamfer(a, b) == chamfer(b, a));
  }
}

TEST_CASE("ucd asymmetry and subset case") {
  PointCloud partial = cloud({{0, 0, 0}, {2, 0, 0}});
  PointCloud completed = cloud({{0, 0, 0}});
  REQUIRE(ucd(partial, completed) == 2.0);  // (0 + 4) / 2
  REQUIRE(ucd(completed, partial) == 0.0);  // subset direction
  Rng rng(3);
  PointCloud a = random_cloud(rng, 32), b = random_cloud(rng, 48);
  REQUIRE(ucd(a, b) <= chamfer(a, b));
}

TEST_CASE("f1 threshold semantics") {
  PointCloud p = cloud({{0, 0, 0}});
  REQUIRE(f1_score(p, p).f1 == 1.0);

  PointCloud g = cloud({{0, 0, 0.05}});
  F1Result far = f1_score(p, g, 0.03);
  REQUIRE(far.f1 == 0.0);
  REQUIRE(far.accuracy == 0.0);
  REQUIRE(far.completeness == 0.0);

  F1Result mixed = f1_score(cloud({{0, 0, 0}, {1, 0, 0}}), cloud({{0, 0, 0}}), 0.03);
  REQUIRE(mixed.accuracy == 0.5);
  REQUIRE(mixed.completeness == 1.0);
  REQUIRE(mixed.f1 == 2.0 / 3.0);

  REQUIRE_THROWS_AS(f1_score(p, g, 0.0), std::invalid_argument);
}

TEST_CASE("f1 is monotone in epsilon") {
  Rng rng(9);
  PointCloud a = random_cloud(rng, 40), b = random_cloud(rng, 30);
  double prev = -1;
  for (double eps : {0.01, 0.03, 0.1, 0.5, 1.0, 3.0}) {
    double f = f1_score(a, b, eps).f1;
    REQUIRE(f >= prev);
    prev = f;
  }
}

TEST_CASE("mmd minimum selection and oracle") {
  Rng rng(33);
  PointCloud a = random_cloud(rng, 16);
  PointCloud far_b = random_cloud(rng, 16);
  for (Point3& p : far_b.points) p.x += 100.0;
  REQUIRE(mmd({a}, {a}) == 0.0);
  REQUIRE(mmd({a}, {a, far_b}) == 0.0);

  std::vector<PointCloud> preds, gts;
  for (int i = 0; i < 5; ++i) preds.push_back(random_cloud(rng, 32));
  for (int i = 0; i < 3; ++i) gts.push_back(random_cloud(rng, 32));
  double want = 0;
  for (const auto& p : preds) {
    double best = 1e300;
    for (const auto& g : gts) best = std::min(best, chamfer(p, g));
    want += best;
  }
  want /= preds.size();
  REQUIRE(mmd(preds, gts) == Catch::Approx(want).epsilon(1e-12));
  REQUIRE(mmd(preds, preds) == 0.0);
  REQUIRE_THROWS_AS(mmd({}, gts), std::invalid_argument);
}
