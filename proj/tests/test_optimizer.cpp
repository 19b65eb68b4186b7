#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "refcomp/gradcheck.hpp"
#include "refcomp/param_store.hpp"

using namespace refcomp;

TEST_CASE("adamw single-step update matches the hand computation") {
  ParamStore store;
  Param& w = store.create("w", {1, 1});
  w.value = {1.0};
  w.grad = {0.5};
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.weight_decay = 1e-2;
  cfg.total_steps = 10;
  optimizer_step(store, cfg, 0);  // cosine factor at step 0 is exactly 1

  double m = (1 - cfg.beta1) * 0.5;
  double v = (1 - cfg.beta2) * 0.25;
  double m_hat = m / (1 - cfg.beta1);
  double v_hat = v / (1 - cfg.beta2);
  double want = 1.0 - cfg.learning_rate *
                          (m_hat / (std::sqrt(v_hat) + cfg.epsilon) +
                           cfg.weight_decay * 1.0);
  REQUIRE(w.value[0] == Catch::Approx(want).margin(1e-12));
  REQUIRE(w.steps == 1);
}

TEST_CASE("zero gradient and zero decay leave the parameter unchanged") {
  ParamStore store;
  Param& w = store.create("w", {2, 1});
  w.value = {3.0, -4.0};
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  optimizer_step(store, cfg, 0);
  REQUIRE(w.value[0] == 3.0);
  REQUIRE(w.value[1] == -4.0);
}

TEST_CASE("cosine schedule endpoints") {
  OptimizerConfig cfg;
  cfg.learning_rate = 5e-4;
  cfg.total_steps = 300;
  REQUIRE(cosine_lr(cfg, 0) == 5e-4);
  REQUIRE(cosine_lr(cfg, 299) < 1e-3 * 5e-4);
  REQUIRE(std::abs(cosine_lr(cfg, 300)) < 1e-18);
  REQUIRE(cosine_lr(cfg, 150) == Catch::Approx(0.5 * 5e-4).margin(1e-12));
}

TEST_CASE("filtered steps touch only the selected entries") {
  ParamStore store;
  Param& a = store.create("aa", {1, 1});
  Param& b = store.create("bb", {1, 1});
  a.value = {1.0};
  b.value = {1.0};
  a.grad = {1.0};
  b.grad = {1.0};
  OptimizerConfig cfg;
  optimizer_step(store, cfg, 0, [](const std::string& n) { return n == "aa"; });
  REQUIRE(a.value[0] != 1.0);
  REQUIRE(b.value[0] == 1.0);
  REQUIRE(a.steps == 1);
  REQUIRE(b.steps == 0);
}

TEST_CASE("store lookups share storage across call sites") {
  ParamStore store;
  store.create("shared", {1, 2});
  Param& first = store.at("shared");
  Param& second = store.at("shared");
  REQUIRE(&first == &second);
  first.value[0] = 7.0;
  REQUIRE(store.at("shared").value[0] == 7.0);
  REQUIRE_THROWS_AS(store.at("missing"), std::invalid_argument);
  REQUIRE_THROWS_AS(store.create("shared", {1}), std::invalid_argument);
}

TEST_CASE("grad_check passes a linear model and rejects a corrupted one") {
  ParamStore store;
  Param& w = store.create("w", {2, 2});
  w.value = {0.3, -0.4, 0.9, 0.1};
  GradCheckReport good = grad_check(
      store,
      [](Graph& g, ParamStore& s) { return g.sum_all(g.scale(g.param(s, "w"), 3.0)); },
      1e-4);
  REQUIRE(good.pass);
  REQUIRE(good.max_rel_err < 1e-8);

  GradCheckReport bad = grad_check(
      store,
      [](Graph& g, ParamStore& s) {
        NodeId w = g.param(s, "w");
        // detached term: finite differences see it, backward does not
        return g.add(g.sum_all(g.square(w)), g.sum_all(g.stop_gradient(w)));
      },
      1e-4);
  REQUIRE(!bad.pass);
}

TEST_CASE("grad_check reports non-finite losses") {
  ParamStore store;
  Param& w = store.create("w", {1, 1});
  w.value = {-1.0};
  REQUIRE_THROWS_AS(
      grad_check(
          store,
          [](Graph& g, ParamStore& s) { return g.sqrt_elem(g.param(s, "w")); }, 1e-4),
      std::runtime_error);
}
