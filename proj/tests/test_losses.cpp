#include <catch2/catch_amalgamated.hpp>

#include "refcomp/losses.hpp"
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

}  // namespace

TEST_CASE("cd_loss value and gradient at the one-point configuration") {
  ParamStore store;
  Param& w = store.create("pred", {1, 3});
  w.value = {0.0, 0.0, 0.0};
  PointCloud target = cloud({{1, 0, 0}});
  Graph g;
  NodeId loss = cd_loss(g, g.param(store, "pred"), target);
  REQUIRE(g.scalar(loss) == 2.0);
  g.backward(loss);
  REQUIRE(w.grad[0] == -4.0);  // both directional terms push toward the target
  REQUIRE(w.grad[1] == 0.0);
  REQUIRE(w.grad[2] == 0.0);
}

TEST_CASE("cd_loss of identical clouds is zero with zero gradient") {
  Rng rng(4);
  PointCloud c = random_cloud(rng, 16);
  ParamStore store;
  Param& w = store.create("pred", {16, 3});
  for (int i = 0; i < 16; ++i) {
    w.value[3 * i] = c.points[i].x;
    w.value[3 * i + 1] = c.points[i].y;
    w.value[3 * i + 2] = c.points[i].z;
  }
  Graph g;
  NodeId loss = cd_loss(g, g.param(store, "pred"), c);
  REQUIRE(g.scalar(loss) == 0.0);
  g.backward(loss);
  for (double v : w.grad) REQUIRE(v == 0.0);
}

TEST_CASE("cd_loss forward equals metrics::chamfer") {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    PointCloud a = random_cloud(rng, 32);
    PointCloud b = random_cloud(rng, 32);
    Graph g;
    NodeId loss = cd_loss(g, g.constant(a), b);
    REQUIRE(g.scalar(loss) == Catch::Approx(chamfer(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("wasserstein_loss hand case and identities") {
  SECTION("identical batches give zero") {
    Rng rng(3);
    std::vector<double> x(8 * 4);
    for (auto& v : x) v = rng.uniform(-1, 1);
    Graph g;
    NodeId xa = g.constant(8, 4, x.data());
    NodeId xb = g.constant(8, 4, x.data());
    REQUIRE(g.scalar(wasserstein_loss(g, xa, xb)) == 0.0);
  }
  SECTION("1-D two-point matching") {
    std::vector<double> fake = {0.0, 2.0};
    std::vector<double> real = {1.0, 3.0};
    Graph g;
    NodeId loss =
        wasserstein_loss(g, g.constant(2, 1, fake.data()), g.constant(2, 1, real.data()));
    REQUIRE(g.scalar(loss) == 1.0);  // matching 0->1, 2->3
  }
  SECTION("batch size mismatch is rejected") {
    Graph g;
    NodeId a = g.constant_fill(2, 4, 0.0);
    NodeId b = g.constant_fill(3, 4, 0.0);
    REQUIRE_THROWS_AS(wasserstein_loss(g, a, b), std::invalid_argument);
  }
}

TEST_CASE("adversarial losses at the fixed points") {
  Graph g;
  NodeId real_one = g.constant_fill(4, 1, 1.0);
  NodeId fake_zero = g.constant_fill(4, 1, 0.0);
  auto [gen, disc] = adversarial_losses(g, real_one, fake_zero);
  REQUIRE(g.scalar(disc) == 0.0);
  REQUIRE(g.scalar(gen) == 0.5);
  NodeId fake_one = g.constant_fill(4, 1, 1.0);
  auto [gen2, disc2] = adversarial_losses(g, real_one, fake_one);
  REQUIRE(g.scalar(gen2) == 0.0);
  REQUIRE(g.scalar(disc2) == 0.5);  // fooled on the fake side: 0.5*mean(1)
}

TEST_CASE("total_loss wiring") {
  LossWeights w;
  SECTION("paper weights with unit parts give exactly 2.001") {
    Graph g;
    NodeId one = g.constant_scalar(1.0);
    REQUIRE(g.scalar(total_loss(g, one, one, one, one, one, -1, w)) == 2.001);
  }
  SECTION("lambda_adv joins only when adv_gen is supplied") {
    Graph g;
    NodeId one = g.constant_scalar(1.0);
    double with_adv = g.scalar(total_loss(g, one, one, one, one, one, one, w));
    REQUIRE(with_adv == 2.001 + 0.1);
  }
  SECTION("gamma = 0 removes the wasserstein gradient") {
    LossWeights wz = w;
    wz.gamma = 0.0;
    ParamStore store;
    Param& p = store.create("wass", {1, 1});
    p.value = {0.7};
    Graph g;
    NodeId one = g.constant_scalar(1.0);
    NodeId total = total_loss(g, one, one, one, one, g.param(store, "wass"), -1, wz);
    g.backward(total);
    REQUIRE(store.at("wass").grad[0] == 0.0);
    REQUIRE(g.scalar(total) == 2.0);
  }
  SECTION("recombination identity") {
    Rng rng(12);
    for (int t = 0; t < 30; ++t) {
      LossBreakdown parts;
      parts.cd_ref = rng.uniform(0, 2);
      parts.cd_aux_ref = rng.uniform(0, 2);
      parts.cd_tar = rng.uniform(0, 2);
      parts.cd_aux_tar = rng.uniform(0, 2);
      parts.wasserstein = rng.uniform(0, 2);
      parts.adv_gen = rng.uniform(0, 2);
      Graph g;
      NodeId total = total_loss(
          g, g.constant_scalar(parts.cd_ref), g.constant_scalar(parts.cd_aux_ref),
          g.constant_scalar(parts.cd_tar), g.constant_scalar(parts.cd_aux_tar),
          g.constant_scalar(parts.wasserstein), g.constant_scalar(parts.adv_gen), w);
      REQUIRE(std::abs(g.scalar(total) - recombine_total(parts, w, true)) <= 1e-12);
    }
  }
}

TEST_CASE("weighted-sum gradients equal the weighted per-part gradients") {
  ParamStore store;
  store.create("pred", {8, 3});
  Rng rng(5);
  for (double& v : store.at("pred").value) v = rng.uniform(-1, 1);
  PointCloud t1 = random_cloud(rng, 8), t2 = random_cloud(rng, 8);
  auto grads = [&](double a, double b) {
    store.zero_grads();
    Graph g;
    NodeId pred = g.param(store, "pred");
    NodeId combined =
        g.add(g.scale(cd_loss(g, pred, t1), a), g.scale(cd_loss(g, pred, t2), b));
    g.backward(combined);
    return store.at("pred").grad;
  };
  auto gc = grads(0.35, 0.65);
  auto g1 = grads(1.0, 0.0);
  auto g2 = grads(0.0, 1.0);
  for (std::size_t i = 0; i < gc.size(); ++i)
    REQUIRE(gc[i] == Catch::Approx(0.35 * g1[i] + 0.65 * g2[i]).margin(1e-10));
}

TEST_CASE("wasserstein metric properties on random batches") {
  Rng rng(31);
  for (int t = 0; t < 30; ++t) {
    int b = 2 + static_cast<int>(rng.below(7));
    int d = 1 + static_cast<int>(rng.below(8));
    std::vector<double> x(static_cast<std::size_t>(b * d)), y(x.size()), z(x.size());
    for (auto& v : x) v = rng.uniform(-2, 2);
    for (auto& v : y) v = rng.uniform(-2, 2);
    for (auto& v : z) v = rng.uniform(-2, 2);
    Graph g;
    NodeId xn = g.constant(b, d, x.data());
    NodeId yn = g.constant(b, d, y.data());
    NodeId zn = g.constant(b, d, z.data());
    double wxy = g.scalar(wasserstein_loss(g, xn, yn));
    double wyx = g.scalar(wasserstein_loss(g, yn, xn));
    double wxz = g.scalar(wasserstein_loss(g, xn, zn));
    double wyz = g.scalar(wasserstein_loss(g, yn, zn));
    REQUIRE(g.scalar(wasserstein_loss(g, xn, xn)) == 0.0);
    REQUIRE(std::abs(wxy - wyx) <= 1e-9);
    REQUIRE(wxz <= wxy + wyz + 1e-9);
  }
}
