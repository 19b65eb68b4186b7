#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "refcomp/config.hpp"
#include "refcomp/gradcheck.hpp"
#include "refcomp/losses.hpp"
#include "refcomp/metrics.hpp"
#include "refcomp/trainer.hpp"

namespace refcomp {

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifySuiteResult {
  std::string suite;
  std::vector<VerifyCheck> checks;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

inline void print_suite(const VerifySuiteResult& r, std::ostream& out) {
  for (const auto& c : r.checks)
    out << (c.pass ? "PASS" : "FAIL") << "  " << r.suite << "/" << c.name
        << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
  out << (r.all_pass() ? "PASS" : "FAIL") << "  " << r.suite << " suite\n";
}

namespace verify_detail {

inline PointCloud random_cloud(Rng& rng, int n, double spread = 1.0) {
  PointCloud c;
  c.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                        rng.uniform(-spread, spread)});
  return c;
}

/// Independent double-loop minimum: no shared code with the metrics module.
inline double oracle_min_sq(const Point3& p, const PointCloud& cloud) {
  double best = 1e300;
  for (const Point3& q : cloud.points) {
    double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
    double d = dx * dx + dy * dy + dz * dz;
    if (d < best) best = d;
  }
  return best;
}

inline double oracle_chamfer(const PointCloud& a, const PointCloud& b) {
  double s1 = 0.0, s2 = 0.0;
  for (const Point3& p : a.points) s1 += oracle_min_sq(p, b);
  for (const Point3& q : b.points) s2 += oracle_min_sq(q, a);
  return s1 / static_cast<double>(a.size()) + s2 / static_cast<double>(b.size());
}

inline double oracle_ucd(const PointCloud& a, const PointCloud& b) {
  double s = 0.0;
  for (const Point3& p : a.points) s += oracle_min_sq(p, b);
  return s / static_cast<double>(a.size());
}

inline double rel_diff(double a, double b) {
  double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

inline ModelArchitecture tiny_arch() {
  ModelArchitecture arch;
  arch.latent_width = 6;
  arch.enc_hidden = 5;
  arch.lsfm_width = 10;
  arch.lsfm_blocks = 5;
  arch.decoder_hidden = {8, 7, 9, 8};
  arch.partial_size = 8;
  arch.complete_size = 16;
  arch.disc_latent_hidden = {6, 4};
  arch.disc_cloud_hidden = 5;
  arch.disc_cloud_feat = 6;
  arch.disc_cloud_head = 4;
  return arch;
}

inline TrainConfig tiny_config(TrainMode mode = TrainMode::Plain) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.arch = tiny_arch();
  cfg.degrade_k_train = 2;
  cfg.seed = 11;
  return cfg;
}

struct TinyBatch {
  std::vector<TrainItem> items;
  std::vector<const TrainItem*> batch;
  std::vector<const ReferencePair*> refs;
};

inline TinyBatch tiny_batch(const TrainConfig& cfg, Rng& rng, int b) {
  TinyBatch out;
  out.items.reserve(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    TrainItem item;
    item.partial = random_cloud(rng, cfg.arch.partial_size);
    item.id = "toy" + std::to_string(i);
    ReferencePair ref;
    ref.partial = random_cloud(rng, cfg.arch.partial_size);
    ref.complete = random_cloud(rng, cfg.arch.complete_size);
    ref.mask = random_cloud(rng, cfg.arch.partial_size);
    ref.source_id = "ref" + std::to_string(i);
    item.refs.push_back(std::move(ref));
    out.items.push_back(std::move(item));
  }
  for (int i = 0; i < b; ++i) {
    out.batch.push_back(&out.items[static_cast<std::size_t>(i)]);
    out.refs.push_back(&out.items[static_cast<std::size_t>(i)].refs.front());
  }
  return out;
}

}  // namespace verify_detail

/// Finite-difference validation of every primitive, each network component,
/// each loss, and the full objective on a small batch, plus a corrupted
/// negative control that the checker must flag.
inline VerifySuiteResult run_gradcheck_suite(std::uint64_t seed) {
  using namespace verify_detail;
  VerifySuiteResult result;
  result.suite = "gradcheck";
  const double tol = 1e-4;
  Rng rng(mix_seed(seed, 0x96adc0deULL));

  auto fill_random = [&](ParamStore& store) {
    for (auto& [name, p] : store)
      for (double& v : p.value) v = rng.uniform(-0.8, 0.8);
  };
  auto check_builder = [&](const std::string& name,
                           const std::function<NodeId(Graph&, ParamStore&)>& builder,
                           ParamStore& store) {
    try {
      GradCheckReport rep = grad_check(store, builder, tol);
      result.checks.push_back({name, rep.pass,
                               "max rel err " + std::to_string(rep.max_rel_err)});
    } catch (const std::exception& e) {
      result.checks.push_back({name, false, e.what()});
    }
  };

  // Primitives, each behind a scalar head.
  {
    struct PrimCase {
      const char* name;
      std::function<NodeId(Graph&, ParamStore&)> builder;
    };
    std::vector<PrimCase> cases;
    cases.push_back({"matmul", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.matmul(g.param(s, "a"), g.param(s, "b")));
                     }});
    cases.push_back({"add", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.add(g.param(s, "a3"), g.param(s, "b3")));
                     }});
    cases.push_back({"sub", [](Graph& g, ParamStore& s) {
                       return g.sum_all(
                           g.square(g.sub(g.param(s, "a3"), g.param(s, "b3"))));
                     }});
    cases.push_back({"bias_add", [](Graph& g, ParamStore& s) {
                       return g.sum_all(
                           g.square(g.bias_add(g.param(s, "a"), g.param(s, "bias"))));
                     }});
    cases.push_back({"concat_cols", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.square(
                           g.concat_cols(g.param(s, "a3"), g.param(s, "b3"))));
                     }});
    cases.push_back({"concat_rows", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.square(
                           g.concat_rows(g.param(s, "a3"), g.param(s, "b3"))));
                     }});
    cases.push_back({"slice_rows", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.square(g.slice_rows(g.param(s, "a3"), 1, 2)));
                     }});
    cases.push_back({"reshape", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.square(g.reshape(g.param(s, "a3"), 2, 6)));
                     }});
    cases.push_back({"relu", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.relu(g.param(s, "a3")));
                     }});
    cases.push_back({"leaky_relu", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.leaky_relu(g.param(s, "a3"), 0.2));
                     }});
    cases.push_back({"max_rows", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.max_rows(g.param(s, "a3")));
                     }});
    cases.push_back({"gather_rows", [](Graph& g, ParamStore& s) {
                       return g.sum_all(
                           g.square(g.gather_rows(g.param(s, "a3"), {2, 0, 2})));
                     }});
    cases.push_back({"sum_all", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.square(g.param(s, "a3")));
                     }});
    cases.push_back({"mean_all", [](Graph& g, ParamStore& s) {
                       return g.mean_all(g.square(g.param(s, "a3")));
                     }});
    cases.push_back({"row_sums", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.square(g.row_sums(g.param(s, "a3"))));
                     }});
    cases.push_back({"scale", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.scale(g.square(g.param(s, "a3")), -1.7));
                     }});
    cases.push_back({"square", [](Graph& g, ParamStore& s) {
                       return g.sum_all(g.square(g.param(s, "a3")));
                     }});
    cases.push_back({"sqrt", [](Graph& g, ParamStore& s) {
                       NodeId pos = g.bias_add(g.square(g.param(s, "a3")),
                                               g.constant_fill(1, 4, 0.3));
                       return g.sum_all(g.sqrt_elem(pos));
                     }});
    for (auto& c : cases) {
      ParamStore store;
      store.create("a", {2, 3});
      store.create("b", {3, 2});
      store.create("a3", {3, 4});
      store.create("b3", {3, 4});
      store.create("bias", {1, 3});
      fill_random(store);
      check_builder(std::string("primitive ") + c.name, c.builder, store);
    }
  }

  ModelArchitecture arch = tiny_arch();
  PointCloud cloud_p = random_cloud(rng, arch.partial_size);
  PointCloud cloud_c = random_cloud(rng, arch.complete_size);

  {
    ParamStore store;
    detail::init_encoder(store, "enc_p", arch, seed);
    fill_random(store);
    check_builder("encoder E_p",
                  [&](Graph& g, ParamStore& s) {
                    return g.mean_all(encode_partial(g, s, arch, g.constant(cloud_p)));
                  },
                  store);
  }
  {
    ParamStore store;
    detail::init_encoder(store, "enc_c", arch, seed);
    fill_random(store);
    check_builder("encoder E_c",
                  [&](Graph& g, ParamStore& s) {
                    return g.mean_all(encode_complete(g, s, arch, g.constant(cloud_c)));
                  },
                  store);
  }
  {
    ParamStore store;
    detail::init_encoder(store, "enc_m", arch, seed);
    fill_random(store);
    check_builder("encoder E_m",
                  [&](Graph& g, ParamStore& s) {
                    return g.mean_all(encode_mask(g, s, arch, g.constant(cloud_p)));
                  },
                  store);
  }
  {
    ParamStore store;
    const int L = arch.latent_width, W = arch.lsfm_width;
    detail::init_linear(store, "lsfm.lift_p", L, W, seed);
    detail::init_linear(store, "lsfm.lift_m", L, W, seed);
    for (int i = 1; i <= arch.lsfm_blocks; ++i)
      detail::init_linear(store, "lsfm.res" + std::to_string(i), W, W, seed);
    detail::init_linear(store, "lsfm.fuse_res", W, W, seed);
    detail::init_linear(store, "lsfm.proj1", 2 * W, W, seed);
    detail::init_linear(store, "lsfm.proj2", 2 * W, W, seed);
    detail::init_linear(store, "lsfm.out", W, L, seed);
    fill_random(store);
    std::vector<double> zp(static_cast<std::size_t>(2 * L)), zm(zp.size());
    for (auto& v : zp) v = rng.uniform(-1, 1);
    for (auto& v : zm) v = rng.uniform(-1, 1);
    check_builder("lsfm",
                  [&, L](Graph& g, ParamStore& s) {
                    NodeId a = g.constant(2, L, zp.data());
                    NodeId m = g.constant(2, L, zm.data());
                    return g.mean_all(g.square(lsfm(g, s, arch, a, m)));
                  },
                  store);
  }
  for (DecoderHead head : {DecoderHead::Main, DecoderHead::Aux}) {
    ParamStore store;
    std::string base = head == DecoderHead::Main ? "dec_main" : "dec_aux";
    int in = arch.latent_width;
    for (std::size_t i = 0; i < arch.decoder_hidden.size(); ++i) {
      detail::init_linear(store, base + ".l" + std::to_string(i + 1), in,
                          arch.decoder_hidden[i], seed);
      in = arch.decoder_hidden[i];
    }
    detail::init_linear(store, base + ".l" + std::to_string(arch.decoder_hidden.size() + 1),
                        in, 3 * arch.complete_size, seed);
    fill_random(store);
    std::vector<double> z(static_cast<std::size_t>(arch.latent_width));
    for (auto& v : z) v = rng.uniform(-1, 1);
    check_builder(head == DecoderHead::Main ? "decoder D_c" : "decoder D_c^r",
                  [&, head](Graph& g, ParamStore& s) {
                    NodeId zn = g.constant(1, arch.latent_width, z.data());
                    NodeId cloud = decode(g, s, arch, zn, head);
                    return cd_loss(g, cloud, cloud_c);
                  },
                  store);
  }
  {
    ParamStore store;
    int in = arch.latent_width;
    for (std::size_t i = 0; i < arch.disc_latent_hidden.size(); ++i) {
      detail::init_linear(store, "disc_z.l" + std::to_string(i + 1), in,
                          arch.disc_latent_hidden[i], seed);
      in = arch.disc_latent_hidden[i];
    }
    detail::init_linear(store, "disc_z.l" + std::to_string(arch.disc_latent_hidden.size() + 1),
                        in, 1, seed);
    fill_random(store);
    std::vector<double> z(static_cast<std::size_t>(3 * arch.latent_width));
    for (auto& v : z) v = rng.uniform(-1, 1);
    check_builder("discriminator latent",
                  [&](Graph& g, ParamStore& s) {
                    NodeId zn = g.constant(3, arch.latent_width, z.data());
                    return g.mean_all(g.square(discriminate_latent(g, s, arch, zn)));
                  },
                  store);
  }
  {
    ParamStore store;
    detail::init_linear(store, "disc_c.pp1", 3, arch.disc_cloud_hidden, seed);
    detail::init_linear(store, "disc_c.pp2", arch.disc_cloud_hidden,
                        arch.disc_cloud_feat, seed);
    detail::init_linear(store, "disc_c.h1", arch.disc_cloud_feat, arch.disc_cloud_head,
                        seed);
    detail::init_linear(store, "disc_c.h2", arch.disc_cloud_head, 1, seed);
    fill_random(store);
    check_builder("discriminator cloud",
                  [&](Graph& g, ParamStore& s) {
                    return g.square(
                        discriminate_cloud(g, s, arch, g.constant(cloud_c)));
                  },
                  store);
  }
  {
    ParamStore store;
    store.create("pred", {static_cast<std::size_t>(arch.partial_size), 3});
    fill_random(store);
    check_builder("cd loss",
                  [&](Graph& g, ParamStore& s) {
                    return cd_loss(g, g.param(s, "pred"), cloud_c);
                  },
                  store);
  }
  {
    ParamStore store;
    store.create("fake", {4, 5});
    store.create("real", {4, 5});
    fill_random(store);
    check_builder("wasserstein loss",
                  [&](Graph& g, ParamStore& s) {
                    return wasserstein_loss(g, g.param(s, "fake"), g.param(s, "real"));
                  },
                  store);
  }
  {
    ParamStore store;
    store.create("s_real", {4, 1});
    store.create("s_fake", {4, 1});
    fill_random(store);
    check_builder("adversarial gen",
                  [&](Graph& g, ParamStore& s) {
                    return adversarial_losses(g, g.param(s, "s_real"),
                                              g.param(s, "s_fake"))
                        .first;
                  },
                  store);
    check_builder("adversarial disc",
                  [&](Graph& g, ParamStore& s) {
                    return adversarial_losses(g, g.param(s, "s_real"),
                                              g.param(s, "s_fake"))
                        .second;
                  },
                  store);
  }
  {
    TrainConfig cfg = tiny_config();
    TinyBatch tb = tiny_batch(cfg, rng, 4);
    ParamStore store;
    init_network_params(store, cfg.arch, seed, false, false);
    check_builder("full objective (4-item batch)",
                  [&](Graph& g, ParamStore& s) {
                    return build_step_graph(g, s, cfg, 0, tb.batch, tb.refs).total;
                  },
                  store);
  }
  {
    // Negative control: hide a detached linear term from backward; the
    // finite differences see it and the checker must report the mismatch.
    ParamStore store;
    store.create("w", {2, 3});
    for (auto& [name, p] : store)
      for (double& v : p.value) v = rng.uniform(-0.8, 0.8);
    GradCheckReport rep = grad_check(
        store,
        [](Graph& g, ParamStore& s) {
          NodeId w = g.param(s, "w");
          NodeId honest = g.sum_all(g.square(w));
          NodeId hidden = g.sum_all(g.stop_gradient(g.scale(w, 0.5)));
          return g.add(honest, hidden);
        },
        tol);
    result.checks.push_back({"negative control rejected", !rep.pass,
                             "max rel err " + std::to_string(rep.max_rel_err)});
  }
  return result;
}

/// Brute-force oracle agreement: KNN, the four metrics, the assignment-based
/// Wasserstein distance, and reference retrieval ranking.
inline VerifySuiteResult run_oracle_suite(std::uint64_t seed) {
  using namespace verify_detail;
  VerifySuiteResult result;
  result.suite = "oracle";
  Rng rng(mix_seed(seed, 0x0bac1eULL));

  {
    bool ok = true;
    std::string detail;
    for (int t = 0; t < 200 && ok; ++t) {
      int n = 2 + static_cast<int>(rng.below(255));
      int k = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(std::min(16, n))));
      PointCloud target = random_cloud(rng, n);
      Point3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      NeighborList got = knn(q, target, k);
      std::vector<std::pair<double, int>> all;
      for (int i = 0; i < n; ++i)
        all.push_back({sq_dist(q, target.points[static_cast<std::size_t>(i)]), i});
      std::sort(all.begin(), all.end());
      for (int i = 0; i < k; ++i) {
        if (got.indices[static_cast<std::size_t>(i)] != all[static_cast<std::size_t>(i)].second ||
            got.distances[static_cast<std::size_t>(i)] != all[static_cast<std::size_t>(i)].first) {
          ok = false;
          detail = "mismatch at trial " + std::to_string(t);
        }
        if (i > 0 && got.distances[static_cast<std::size_t>(i)] <
                         got.distances[static_cast<std::size_t>(i - 1)]) {
          ok = false;
          detail = "distances not ascending at trial " + std::to_string(t);
        }
      }
    }
    result.checks.push_back({"knn vs exhaustive sort (200)", ok, detail});
  }
  {
    bool ok = true;
    for (int t = 0; t < 200 && ok; ++t) {
      PointCloud tgt = random_cloud(rng, 50);
      Point3 q{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
      ok = nn_sq_dist(q, tgt) == oracle_min_sq(q, tgt);
    }
    result.checks.push_back({"nn_sq_dist vs scan (200)", ok, ""});
  }
  {
    bool ok = true;
    double worst = 0.0;
    for (int t = 0; t < 200 && ok; ++t) {
      int n = 1 + static_cast<int>(rng.below(128));
      int m = 1 + static_cast<int>(rng.below(128));
      PointCloud a = random_cloud(rng, n), b = random_cloud(rng, m);
      worst = std::max(worst, rel_diff(chamfer(a, b), oracle_chamfer(a, b)));
      worst = std::max(worst, rel_diff(ucd(a, b), oracle_ucd(a, b)));
      ok = worst <= 1e-12;
    }
    result.checks.push_back({"chamfer/ucd oracle (200, rel 1e-12)", ok,
                             "worst rel " + std::to_string(worst)});
  }
  {
    bool ok = true;
    for (int t = 0; t < 200 && ok; ++t) {
      int n = 1 + static_cast<int>(rng.below(96));
      int m = 1 + static_cast<int>(rng.below(96));
      double eps = rng.uniform(0.05, 1.2);
      PointCloud a = random_cloud(rng, n), b = random_cloud(rng, m);
      F1Result got = f1_score(a, b, eps);
      // independent recount
      int hits_a = 0, hits_b = 0;
      for (const Point3& p : a.points)
        if (std::sqrt(oracle_min_sq(p, b)) < eps) ++hits_a;
      for (const Point3& p : b.points)
        if (std::sqrt(oracle_min_sq(p, a)) < eps) ++hits_b;
      double acc = double(hits_a) / double(n), comp = double(hits_b) / double(m);
      double f1 = acc + comp > 0 ? 2 * acc * comp / (acc + comp) : 0.0;
      ok = rel_diff(got.f1, f1) <= 1e-12 && got.accuracy == acc &&
           got.completeness == comp;
    }
    result.checks.push_back({"f1 oracle (200)", ok, ""});
  }
  {
    bool ok = true;
    for (int t = 0; t < 50 && ok; ++t) {
      int np = 1 + static_cast<int>(rng.below(6));
      int ng = 1 + static_cast<int>(rng.below(5));
      std::vector<PointCloud> preds, gts;
      for (int i = 0; i < np; ++i) preds.push_back(random_cloud(rng, 32));
      for (int i = 0; i < ng; ++i) gts.push_back(random_cloud(rng, 32));
      double got = mmd(preds, gts);
      double want = 0.0;
      for (const auto& p : preds) {
        double best = 1e300;
        for (const auto& g : gts) best = std::min(best, oracle_chamfer(p, g));
        want += best;
      }
      want /= static_cast<double>(np);
      ok = rel_diff(got, want) <= 1e-12;
    }
    result.checks.push_back({"mmd oracle (50 set pairs)", ok, ""});
  }
  {
    // fixed hand cases
    PointCloud a1{{{0, 0, 0}}}, b1{{{1, 0, 0}}};
    PointCloud pu{{{0, 0, 0}, {2, 0, 0}}}, cu{{{0, 0, 0}}};
    PointCloud fp{{{0, 0, 0}, {1, 0, 0}}}, fg{{{0, 0, 0}}};
    F1Result f = f1_score(fp, fg, 0.03);
    bool ok = chamfer(a1, b1) == 2.0 && ucd(pu, cu) == 2.0 && f.f1 == 2.0 / 3.0 &&
              f.accuracy == 0.5 && f.completeness == 1.0;
    result.checks.push_back({"fixed hand examples exact", ok, ""});
  }
  {
    bool ok = true;
    std::string detail;
    for (int t = 0; t < 50 && ok; ++t) {
      int b = 1 + static_cast<int>(rng.below(6));
      int d = 1 + static_cast<int>(rng.below(4));
      std::vector<double> fake(static_cast<std::size_t>(b * d)), real(fake.size());
      for (auto& v : fake) v = rng.uniform(-2, 2);
      for (auto& v : real) v = rng.uniform(-2, 2);
      Graph g;
      NodeId fn = g.constant(b, d, fake.data());
      NodeId rn = g.constant(b, d, real.data());
      double got = g.scalar(wasserstein_loss(g, fn, rn));
      // factorial enumeration
      std::vector<double> cost(static_cast<std::size_t>(b) * b);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
          double acc = 0;
          for (int k = 0; k < d; ++k) {
            double diff = fake[static_cast<std::size_t>(i) * d + k] -
                          real[static_cast<std::size_t>(j) * d + k];
            acc += diff * diff;
          }
          cost[static_cast<std::size_t>(i) * b + j] = std::sqrt(acc);
        }
      std::vector<int> perm(static_cast<std::size_t>(b));
      std::iota(perm.begin(), perm.end(), 0);
      double best = 1e300;
      do {
        double acc = 0;
        for (int i = 0; i < b; ++i)
          acc += cost[static_cast<std::size_t>(i) * b + perm[static_cast<std::size_t>(i)]];
        best = std::min(best, acc / static_cast<double>(b));
      } while (std::next_permutation(perm.begin(), perm.end()));
      if (got != best) {
        ok = false;
        detail = "trial " + std::to_string(t) + ": got " + std::to_string(got) +
                 " want " + std::to_string(best);
      }
    }
    result.checks.push_back({"wasserstein vs factorial (B<=6, 50)", ok, detail});
  }
  {
    bool ok = true;
    for (int t = 0; t < 10 && ok; ++t) {
      int b = 2 + static_cast<int>(rng.below(31));
      std::vector<double> cost(static_cast<std::size_t>(b) * b);
      for (auto& v : cost) v = rng.uniform(0, 4);
      AssignmentResult sol = solve_assignment(cost, b);
      std::vector<int> perm(static_cast<std::size_t>(b));
      std::iota(perm.begin(), perm.end(), 0);
      for (int s = 0; s < 1000; ++s) {
        rng.shuffle(perm);
        double acc = 0;
        for (int i = 0; i < b; ++i)
          acc += cost[static_cast<std::size_t>(i) * b + perm[static_cast<std::size_t>(i)]];
        if (sol.cost > acc + 1e-12) {
          ok = false;
          break;
        }
      }
    }
    result.checks.push_back({"assignment <= 1000 random permutations (B<=32)", ok, ""});
  }
  {
    // retrieval ranking vs exhaustive scan on a 20-cloud corpus
    const int kNeighbors = 5, kTop = 3, kPartial = 24, kComplete = 64;
    const double min_cd = 1e-4;
    std::vector<PointCloud> corpus;
    for (int i = 0; i < 20; ++i) {
      PointCloud c = random_cloud(rng, kComplete);
      char sid[16];
      std::snprintf(sid, sizeof(sid), "s%02d", i);
      c.source_id = sid;
      c.class_label = "x";
      corpus.push_back(std::move(c));
    }
    PointCloud target = random_cloud(rng, kPartial);
    target.class_label = "x";
    std::vector<ReferencePair> got =
        build_reference_pairs(target, corpus, kNeighbors, kTop, min_cd,
                              ClassScope::AllClasses, kPartial, kPartial, seed);
    // exhaustive scan with the same per-entry degradation streams
    std::vector<std::pair<double, std::string>> scored;
    for (std::size_t ci = 0; ci < corpus.size(); ++ci) {
      DegradationResult deg =
          degrade(target, corpus[ci], kNeighbors, kPartial, kPartial,
                  mix_seed(seed, hash_name(corpus[ci].source_id), ci));
      double cd = oracle_chamfer(target, deg.partial);
      if (cd < min_cd) continue;
      scored.push_back({cd, corpus[ci].source_id});
    }
    std::sort(scored.begin(), scored.end());
    bool ok = got.size() == static_cast<std::size_t>(kTop);
    for (int i = 0; i < kTop && ok; ++i) {
      ok = got[static_cast<std::size_t>(i)].source_id ==
               scored[static_cast<std::size_t>(i)].second &&
           rel_diff(got[static_cast<std::size_t>(i)].cd_to_template,
                    scored[static_cast<std::size_t>(i)].first) <= 1e-12;
    }
    result.checks.push_back({"retrieval vs exhaustive scan (20 shapes)", ok, ""});
  }
  return result;
}

/// Structural invariants: symmetry and ordering laws, degradation
/// partitioning, permutation invariance, parameter sharing, weight wiring,
/// and schedule endpoints.
inline VerifySuiteResult run_invariant_suite(std::uint64_t seed) {
  using namespace verify_detail;
  VerifySuiteResult result;
  result.suite = "invariants";
  Rng rng(mix_seed(seed, 0x1417a1ULL));
  auto push = [&](const std::string& name, bool pass, const std::string& detail = "") {
    result.checks.push_back({name, pass, detail});
  };

  {
    bool ok = true;
    for (int t = 0; t < 50 && ok; ++t) {
      PointCloud a = random_cloud(rng, 1 + static_cast<int>(rng.below(64)));
      PointCloud b = random_cloud(rng, 1 + static_cast<int>(rng.below(64)));
      ok = chamfer(a, b) == chamfer(b, a) && ucd(a, b) <= chamfer(a, b);
    }
    push("chamfer symmetry & ucd bound", ok);
  }
  {
    PointCloud a = random_cloud(rng, 40), b = random_cloud(rng, 30);
    double prev = -1.0;
    bool ok = true;
    for (double eps : {0.01, 0.05, 0.1, 0.4, 1.0, 2.0}) {
      double f = f1_score(a, b, eps).f1;
      ok = ok && f >= prev;
      prev = f;
    }
    std::vector<PointCloud> s{a, b};
    ok = ok && mmd(s, s) == 0.0;
    push("f1 monotone in epsilon; mmd(S,S)=0", ok);
  }
  {
    bool ok = true;
    for (int t = 0; t < 50 && ok; ++t) {
      PointCloud c = random_cloud(rng, 2 + static_cast<int>(rng.below(100)), 3.0);
      NormalizeResult n1 = normalize_unit_sphere(c);
      NormalizeResult n2 = normalize_unit_sphere(n1.cloud);
      for (std::size_t i = 0; i < c.size() && ok; ++i) {
        Point3 d = n2.cloud.points[i] - n1.cloud.points[i];
        ok = std::abs(d.x) <= 1e-9 && std::abs(d.y) <= 1e-9 && std::abs(d.z) <= 1e-9;
      }
      PointCloud back = denormalize(n1.cloud, n1.centroid, n1.scale);
      for (std::size_t i = 0; i < c.size() && ok; ++i)
        ok = sq_dist(back.points[i], c.points[i]) < 1e-14;
    }
    push("normalization idempotent + invertible", ok);
  }
  {
    PointCloud c = random_cloud(rng, 64);
    PointCloud r1 = resample(c, 40, SampleStrategy::Random, 7);
    PointCloud r2 = resample(c, 40, SampleStrategy::Random, 7);
    bool ok = r1.points.size() == 40;
    for (std::size_t i = 0; i < r1.size() && ok; ++i)
      ok = r1.points[i] == r2.points[i];
    push("resample purity (same seed, same output)", ok);
  }
  {
    bool ok = true;
    for (int t = 0; t < 100 && ok; ++t) {
      int n = 8 + static_cast<int>(rng.below(56));
      PointCloud complete = random_cloud(rng, n);
      PointCloud tmpl = random_cloud(rng, 1 + static_cast<int>(rng.below(6)));
      int k = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(n / 2)));
      DegradationResult deg;
      try {
        deg = degrade(tmpl, complete, k, 0, 0, seed + static_cast<std::uint64_t>(t));
      } catch (const std::exception&) {
        continue;  // degenerate mask case
      }
      std::set<int> sel(deg.selected_indices.begin(), deg.selected_indices.end());
      std::set<int> comp(deg.complement_indices.begin(), deg.complement_indices.end());
      ok = sel.size() + comp.size() == static_cast<std::size_t>(n);
      for (int i : sel) ok = ok && !comp.count(i);
      ok = ok && deg.partial.size() == sel.size() && deg.mask.size() == comp.size();
      // every partial point is a complete point, by index
      for (std::size_t i = 0; i < deg.selected_indices.size() && ok; ++i)
        ok = deg.partial.points[i] ==
             complete.points[static_cast<std::size_t>(deg.selected_indices[i])];
      // monotone coverage in k
      if (ok && k + 1 <= n) {
        std::vector<int> bigger = degradation_union_indices(tmpl, complete, k + 1);
        std::set<int> big(bigger.begin(), bigger.end());
        for (int i : sel) ok = ok && big.count(i);
      }
    }
    push("degradation partition + monotone coverage (100)", ok);
  }
  {
    bool ok = true;
    for (int t = 0; t < 20 && ok; ++t) {
      int b = 2 + static_cast<int>(rng.below(7));
      int d = 1 + static_cast<int>(rng.below(6));
      std::vector<double> x(static_cast<std::size_t>(b * d)), y(x.size()), z(x.size());
      for (auto& v : x) v = rng.uniform(-2, 2);
      for (auto& v : y) v = rng.uniform(-2, 2);
      for (auto& v : z) v = rng.uniform(-2, 2);
      Graph g;
      NodeId xn = g.constant(b, d, x.data());
      NodeId yn = g.constant(b, d, y.data());
      NodeId zn = g.constant(b, d, z.data());
      double wxx = g.scalar(wasserstein_loss(g, xn, xn));
      double wxy = g.scalar(wasserstein_loss(g, xn, yn));
      double wyx = g.scalar(wasserstein_loss(g, yn, xn));
      double wyz = g.scalar(wasserstein_loss(g, yn, zn));
      double wxz = g.scalar(wasserstein_loss(g, xn, zn));
      ok = wxx == 0.0 && std::abs(wxy - wyx) <= 1e-9 && wxz <= wxy + wyz + 1e-9;
    }
    push("wasserstein metric laws (identity, symmetry, triangle)", ok);
  }
  {
    ModelArchitecture arch = tiny_arch();
    ParamStore store;
    init_network_params(store, arch, seed, false, true);
    PointCloud cloud = random_cloud(rng, arch.partial_size);
    PointCloud cloud_c = random_cloud(rng, arch.complete_size);
    std::vector<int> perm(static_cast<std::size_t>(arch.partial_size));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    PointCloud shuffled = gather_points(cloud, perm);
    std::vector<int> perm_c(static_cast<std::size_t>(arch.complete_size));
    std::iota(perm_c.begin(), perm_c.end(), 0);
    rng.shuffle(perm_c);
    PointCloud shuffled_c = gather_points(cloud_c, perm_c);
    Graph g;
    auto diff_max = [&](NodeId a, NodeId b) {
      double worst = 0;
      for (std::size_t i = 0; i < g.value(a).size(); ++i)
        worst = std::max(worst, std::abs(g.value(a)[i] - g.value(b)[i]));
      return worst;
    };
    double d1 = diff_max(encode_partial(g, store, arch, g.constant(cloud)),
                         encode_partial(g, store, arch, g.constant(shuffled)));
    double d2 = diff_max(encode_complete(g, store, arch, g.constant(cloud_c)),
                         encode_complete(g, store, arch, g.constant(shuffled_c)));
    double d3 = diff_max(encode_mask(g, store, arch, g.constant(cloud)),
                         encode_mask(g, store, arch, g.constant(shuffled)));
    double d4 = diff_max(discriminate_cloud(g, store, arch, g.constant(cloud_c)),
                         discriminate_cloud(g, store, arch, g.constant(shuffled_c)));
    push("permutation invariance (encoders, cloud disc)",
         d1 <= 1e-9 && d2 <= 1e-9 && d3 <= 1e-9 && d4 <= 1e-9);
  }
  {
    ModelArchitecture arch = tiny_arch();
    ParamStore store;
    init_network_params(store, arch, seed, false, true);  // zero biases, but zero all
    for (auto& [name, p] : store) std::fill(p.value.begin(), p.value.end(), 0.0);
    Graph g;
    double sz = g.scalar(g.mean_all(
        discriminate_latent(g, store, arch, g.constant_fill(2, arch.latent_width, 0.7))));
    double sc = g.scalar(
        discriminate_cloud(g, store, arch, g.constant(random_cloud(rng, 12))));
    push("zero-parameter discriminators score 0", sz == 0.0 && sc == 0.0);
  }
  {
    // Shared storage: the same name yields the same storage at every site.
    ParamStore store;
    store.create("shared.w", {2, 2});
    Param& a = store.at("shared.w");
    Param& b = store.at("shared.w");
    a.value[0] = 42.0;
    push("shared storage identity", &a == &b && b.value[0] == 42.0);
  }
  {
    // Branch parameter-name audit: reference and target passes touch the
    // identical trio names in shared mode.
    TrainConfig cfg = tiny_config();
    ParamStore store;
    init_network_params(store, cfg.arch, seed, false, false);
    PointCloud p = random_cloud(rng, cfg.arch.partial_size);
    PointCloud m = random_cloud(rng, cfg.arch.partial_size);
    auto touched_trio = [&](Branch br) {
      Graph g;
      NodeId zp = encode_partial(g, store, cfg.arch, g.constant(p), br);
      NodeId zm = encode_mask(g, store, cfg.arch, g.constant(m));
      NodeId zc = lsfm(g, store, cfg.arch, zp, zm, br);
      decode(g, store, cfg.arch, zc, DecoderHead::Main, br);
      std::set<std::string> names;
      for (const std::string& n : g.touched_params())
        if (n.rfind("enc_m", 0) != 0) names.insert(n);
      return names;
    };
    auto ref_names = touched_trio(Branch::Shared);
    auto tar_names = touched_trio(Branch::Shared);
    push("branch name-set identity (shared mode)", ref_names == tar_names);
    // no-share: disjoint prefixed sets, exactly double the trio count
    ParamStore shared_store, noshare_store;
    init_network_params(shared_store, cfg.arch, seed, false, false);
    init_network_params(noshare_store, cfg.arch, seed, true, false);
    auto trio_count = [](const ParamStore& s, const std::string& prefix) {
      std::size_t n = 0;
      for (const auto& [name, p] : s) {
        std::string stripped = name;
        if (!prefix.empty()) {
          if (name.rfind(prefix, 0) != 0) continue;
          stripped = name.substr(prefix.size());
        } else if (name.rfind("ref.", 0) == 0 || name.rfind("tar.", 0) == 0) {
          continue;
        }
        if (stripped.rfind("enc_p", 0) == 0 || stripped.rfind("lsfm", 0) == 0 ||
            stripped.rfind("dec_main", 0) == 0)
          n += p.size();
      }
      return n;
    };
    std::size_t shared_trio = trio_count(shared_store, "");
    std::size_t ref_trio = trio_count(noshare_store, "ref.");
    std::size_t tar_trio = trio_count(noshare_store, "tar.");
    bool disjoint_ok = ref_trio == shared_trio && tar_trio == shared_trio &&
                       noshare_store.total_size() ==
                           shared_store.total_size() + shared_trio;
    push("no-share doubles the shared trio exactly", disjoint_ok,
         "trio=" + std::to_string(shared_trio));
  }
  {
    // Eq. 5 wiring: forced parts and the recombination identity.
    LossWeights w;
    Graph g;
    NodeId one = g.constant_scalar(1.0);
    NodeId total = total_loss(g, one, one, one, one, one, -1, w);
    bool exact = g.scalar(total) == 2.001;
    bool ok = exact;
    for (int t = 0; t < 20 && ok; ++t) {
      LossBreakdown parts;
      parts.cd_ref = rng.uniform(0, 3);
      parts.cd_aux_ref = rng.uniform(0, 3);
      parts.cd_tar = rng.uniform(0, 3);
      parts.cd_aux_tar = rng.uniform(0, 3);
      parts.wasserstein = rng.uniform(0, 3);
      parts.adv_gen = rng.uniform(0, 3);
      Graph g2;
      NodeId tot = total_loss(g2, g2.constant_scalar(parts.cd_ref),
                              g2.constant_scalar(parts.cd_aux_ref),
                              g2.constant_scalar(parts.cd_tar),
                              g2.constant_scalar(parts.cd_aux_tar),
                              g2.constant_scalar(parts.wasserstein),
                              g2.constant_scalar(parts.adv_gen), w);
      ok = std::abs(g2.scalar(tot) - recombine_total(parts, w, true)) <= 1e-12;
    }
    push("weights: forced parts give 2.001 exactly; recombination <= 1e-12", ok);
  }
  {
    // beta = 0 freezes the target branch: gradients of shared parameters are
    // bitwise identical when the target inputs are swapped out entirely.
    TrainConfig cfg = tiny_config();
    cfg.weights.beta = 0.0;
    Rng crng(mix_seed(seed, 77));
    TinyBatch tb1 = tiny_batch(cfg, crng, 2);
    TinyBatch tb2 = tiny_batch(cfg, crng, 2);
    for (int i = 0; i < 2; ++i) {  // same references, different targets
      tb2.items[static_cast<std::size_t>(i)].refs =
          tb1.items[static_cast<std::size_t>(i)].refs;
      tb2.refs[static_cast<std::size_t>(i)] =
          &tb2.items[static_cast<std::size_t>(i)].refs.front();
    }
    ParamStore s1, s2;
    init_network_params(s1, cfg.arch, seed, false, false);
    init_network_params(s2, cfg.arch, seed, false, false);
    Graph g1, g2;
    StepGraph sg1 = build_step_graph(g1, s1, cfg, 0, tb1.batch, tb1.refs);
    StepGraph sg2 = build_step_graph(g2, s2, cfg, 0, tb2.batch, tb2.refs);
    s1.zero_grads();
    s2.zero_grads();
    g1.backward(sg1.total);
    g2.backward(sg2.total);
    bool ok = true;
    for (const auto& [name, p1] : s1) {
      const Param& p2 = s2.at(name);
      for (std::size_t i = 0; i < p1.size() && ok; ++i)
        ok = p1.grad[i] == p2.grad[i];
    }
    push("beta=0 freezes target-branch influence (bitwise)", ok);
  }
  {
    OptimizerConfig opt;
    opt.total_steps = 300;
    bool ok = cosine_lr(opt, 0) == opt.learning_rate &&
              cosine_lr(opt, 299) < 1e-3 * opt.learning_rate &&
              std::abs(cosine_lr(opt, 300)) < 1e-18;
    push("cosine schedule endpoints", ok);
  }
  return result;
}

}  // namespace refcomp
