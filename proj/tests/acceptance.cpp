// Acceptance suite: runs every gate criterion end to end and prints one
// PASS/FAIL line per criterion. Exits 0 only when all criteria hold.

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "refcomp/checkpoint.hpp"
#include "refcomp/metrics.hpp"
#include "refcomp/shapes.hpp"
#include "refcomp/trainer.hpp"
#include "refcomp/verify.hpp"

using namespace refcomp;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args, const fs::path& log) {
  std::string cmd = std::string("\"") + REFCOMP_CLI_PATH + "\" " + args + " > " +
                    log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  if (WIFEXITED(rc)) return WEXITSTATUS(rc);
  return -2;
}

/// All regular files under a directory as relative-path -> bytes.
std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      out[fs::relative(entry.path(), dir).string()] = slurp(entry.path());
  return out;
}

bool suite_subset_passes(const VerifySuiteResult& suite,
                         const std::vector<std::string>& name_keys,
                         std::string& detail) {
  bool ok = true;
  for (const auto& check : suite.checks) {
    bool relevant = false;
    for (const std::string& key : name_keys)
      if (check.name.find(key) != std::string::npos) relevant = true;
    if (relevant && !check.pass) {
      ok = false;
      detail += check.name + " failed; ";
    }
  }
  return ok;
}

struct ToyWorkspace {
  fs::path root;
  std::string manifest_path;
  std::string heldout_manifest_path;
  std::vector<std::string> heldout_targets;  // paths relative to manifest dir
};

/// Seeded 4-class 200-shape corpus, 32 training partials and 8 held-out
/// partials (degraded with k = 15), reference pairs per target.
ToyWorkspace build_toy_workspace(const fs::path& root, const TrainConfig& cfg) {
  ToyWorkspace ws;
  ws.root = root;
  fs::create_directories(root / "data");

  const int per_class_corpus = 50;
  const int per_class_targets = 10;  // 8 train + 2 held out
  std::vector<PointCloud> corpus;
  for (const std::string& cls : shape_classes()) {
    for (int i = 0; i < per_class_corpus; ++i) {
      ShapeSpec spec = random_shape_spec(
          cls, cfg.arch.complete_size, mix_seed(cfg.seed, hash_name(cls), i));
      PointCloud c = generate_shape(spec);
      c.source_id = cls + "_" + std::to_string(i);
      corpus.push_back(std::move(c));
    }
  }

  // target sources come from a disjoint seed stream
  std::vector<PointCloud> target_sources;
  for (const std::string& cls : shape_classes()) {
    for (int i = 0; i < per_class_targets; ++i) {
      ShapeSpec spec = random_shape_spec(
          cls, cfg.arch.complete_size,
          mix_seed(cfg.seed ^ 0x7a7a7a7aULL, hash_name(cls), i));
      PointCloud c = generate_shape(spec);
      c.source_id = cls + "_tgt" + std::to_string(i);
      target_sources.push_back(std::move(c));
    }
  }

  ReferenceManifest train_manifest, heldout_manifest;
  for (std::size_t t = 0; t < target_sources.size(); ++t) {
    const PointCloud& source = target_sources[t];
    const PointCloud& tmpl = target_sources[(t + 1) % target_sources.size()];
    std::vector<int> sel =
        degradation_union_indices(tmpl, source, cfg.degrade_k_ref);
    Rng rng(mix_seed(cfg.seed, 0xAAAA, t));
    PointCloud partial =
        gather_points(source, sample_indices(sel, cfg.arch.partial_size, rng));
    partial.class_label = source.class_label;
    std::string target_rel = "data/" + source.source_id + "_part.pcb";
    write_cloud(partial, (root / target_rel).string());

    std::vector<ReferencePair> pairs = build_reference_pairs(
        partial, corpus, cfg.degrade_k_ref, cfg.top_n_refs, cfg.min_cd,
        cfg.class_scope(), cfg.arch.partial_size, cfg.arch.partial_size,
        mix_seed(cfg.seed, 0xBBBB, t));
    bool held_out = (t % per_class_targets) >= 8;
    ReferenceManifest& manifest = held_out ? heldout_manifest : train_manifest;
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      std::string base = "data/" + source.source_id + "_r" + std::to_string(r + 1);
      write_cloud(pairs[r].partial, (root / (base + "_p.pcb")).string());
      write_cloud(pairs[r].complete, (root / (base + "_c.pcb")).string());
      write_cloud(pairs[r].mask, (root / (base + "_m.pcb")).string());
      manifest.entries.push_back({target_rel, static_cast<int>(r + 1),
                                  base + "_p.pcb", base + "_c.pcb", base + "_m.pcb",
                                  pairs[r].cd_to_template});
    }
    if (held_out) ws.heldout_targets.push_back(target_rel);
  }
  ws.manifest_path = (root / "train_refs.tsv").string();
  ws.heldout_manifest_path = (root / "heldout_refs.tsv").string();
  save_manifest(train_manifest, ws.manifest_path);
  save_manifest(heldout_manifest, ws.heldout_manifest_path);
  return ws;
}

std::vector<double> totals_from_log(const fs::path& log_path) {
  std::vector<double> totals;
  std::ifstream in(log_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(ls, f, '\t')) fields.push_back(f);
    totals.push_back(std::stod(fields[fields.size() - 2]));
  }
  return totals;
}

double mean_heldout_ucd(const ToyWorkspace& ws, ParamStore& params,
                        const TrainConfig& cfg) {
  ReferenceManifest manifest = load_manifest(ws.heldout_manifest_path, true);
  std::vector<TrainItem> items =
      load_training_set(manifest, ws.root.string(), cfg);
  double acc = 0.0;
  for (const TrainItem& item : items) {
    PointCloud completed = infer(params, cfg, item.partial, item.refs.front());
    acc += ucd(item.partial, completed);
  }
  return acc / static_cast<double>(items.size());
}

std::string pipeline_config_text() {
  return "mode = plain\n"
         "epochs = 40\n"
         "batch_size = 4\n"
         "seed = 9\n"
         "latent_width = 48\n"
         "enc_hidden = 16\n"
         "lsfm_width = 64\n"
         "lsfm_blocks = 5\n"
         "decoder_hidden = 32,32,48,64\n"
         "partial_size = 128\n"
         "complete_size = 512\n"
         "degrade_k_ref = 4\n"
         "degrade_k_train = 2\n"
         "min_cd = 1e-4\n";
}

/// One full CLI pipeline run into `run_dir`; returns false on any nonzero exit.
bool run_pipeline(const fs::path& run_dir, const fs::path& config_path,
                  std::string& detail) {
  fs::create_directories(run_dir);
  fs::path log = run_dir / "cli.log";
  auto step = [&](const std::string& what, const std::string& args) {
    int rc = run_cli(args, log);
    if (rc != 0) {
      detail += what + " exited " + std::to_string(rc) + "; ";
      return false;
    }
    return true;
  };
  fs::path corpus = run_dir / "corpus";
  fs::path targets = run_dir / "targets";
  fs::path train_out = run_dir / "train";
  fs::path completed = run_dir / "completed";
  fs::create_directories(completed);
  if (!step("gen-corpus", "gen-corpus --classes box,torus --per-class 8 --points 512 "
                          "--seed 5 --out " + corpus.string()))
    return false;
  if (!step("make-partials", "make-partials --in " + corpus.string() + " --out " +
                                 targets.string() + " --points 128 --k 4 --seed 6"))
    return false;
  fs::path manifest = run_dir / "refs" / "manifest.tsv";
  if (!step("build-refs", "build-refs --targets " + targets.string() + " --corpus " +
                              corpus.string() +
                              " --k 4 --top-n 3 --min-cd 1e-4 --scope same-class "
                              "--partial-size 128 --seed 7 --out " + manifest.string()))
    return false;
  fs::path config_copy = run_dir / "train.conf";
  fs::copy_file(config_path, config_copy);
  if (!step("train", "train --config " + config_copy.string() + " --manifest " +
                         manifest.string() + " --out " + train_out.string() +
                         " --steps 100"))
    return false;
  fs::path input = targets / "box_0000_part.pcb";
  if (!step("complete", "complete --ckpt " + (train_out / "ckpt_final.rfck").string() +
                            " --input " + input.string() + " --refs " +
                            manifest.string() + " --out " +
                            (completed / "box_0000_part.pcb").string()))
    return false;
  if (!step("eval", "eval --pred " + completed.string() + " --gt " +
                        targets.string() + " --metrics cd,ucd,f1 --out " +
                        (run_dir / "report.tsv").string() + " --per-item " +
                        (run_dir / "per_item.tsv").string()))
    return false;
  return true;
}

}  // namespace

int main() {
  std::vector<Criterion> results;
  const std::uint64_t seed = 2026;
  fs::path work =
      fs::temp_directory_path() / ("refcomp_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  VerifySuiteResult oracle = [&] {
    return run_oracle_suite(seed);
  }();

  // 1. metric oracles
  {
    Criterion c{1, "metric oracles vs brute force"};
    double t0 = now_seconds();
    c.pass = suite_subset_passes(
        oracle, {"chamfer", "f1", "mmd", "fixed hand", "nn_sq_dist"}, c.detail);
    c.seconds = now_seconds() - t0;
    if (c.seconds >= 10.0) {
      c.pass = false;
      c.detail += "runtime over 10 s";
    }
    results.push_back(c);
  }
  // 2. knn and retrieval oracles
  {
    Criterion c{2, "knn + retrieval vs exhaustive scan"};
    double t0 = now_seconds();
    VerifySuiteResult fresh = run_oracle_suite(seed + 1);
    c.pass = suite_subset_passes(fresh, {"knn", "retrieval"}, c.detail);
    c.seconds = now_seconds() - t0;
    if (c.seconds >= 30.0) {
      c.pass = false;
      c.detail += "runtime over 30 s";
    }
    results.push_back(c);
  }
  // 3. optimal-transport exactness
  {
    Criterion c{3, "wasserstein exactness + metric laws"};
    double t0 = now_seconds();
    VerifySuiteResult inv = run_invariant_suite(seed + 2);
    c.pass = suite_subset_passes(oracle, {"wasserstein", "assignment"}, c.detail) &&
             suite_subset_passes(inv, {"wasserstein metric laws"}, c.detail);
    c.seconds = now_seconds() - t0;
    if (c.seconds >= 20.0) {
      c.pass = false;
      c.detail += "runtime over 20 s";
    }
    results.push_back(c);
  }
  // 4. gradient correctness
  {
    Criterion c{4, "finite-difference gradient checks"};
    double t0 = now_seconds();
    VerifySuiteResult gc = run_gradcheck_suite(seed + 3);
    c.pass = gc.all_pass();
    if (!c.pass)
      for (const auto& check : gc.checks)
        if (!check.pass) c.detail += check.name + " failed; ";
    c.seconds = now_seconds() - t0;
    if (c.seconds >= 180.0) {
      c.pass = false;
      c.detail += "runtime over 3 min";
    }
    results.push_back(c);
  }
  // 5. structural invariants
  {
    Criterion c{5, "structural invariants"};
    double t0 = now_seconds();
    VerifySuiteResult inv = run_invariant_suite(seed + 4);
    c.pass = suite_subset_passes(
        inv,
        {"permutation invariance", "degradation partition", "shared storage",
         "branch name-set", "no-share", "weights", "beta=0"},
        c.detail);
    c.seconds = now_seconds() - t0;
    results.push_back(c);
  }
  // 6. toy training convergence
  {
    Criterion c{6, "toy training convergence + held-out UCD"};
    double t0 = now_seconds();
    try {
      TrainConfig cfg = TrainConfig::desk_preset();
      cfg.seed = seed;
      cfg.epochs = 75;  // 32 targets / batch 8 = 4 steps per epoch
      cfg.max_steps = 300;
      ToyWorkspace ws = build_toy_workspace(work / "toy", cfg);

      TrainResult res = train(cfg, ws.manifest_path, (work / "toy_out").string());
      std::vector<double> totals =
          totals_from_log(fs::path(res.log_path));
      bool steps_ok = res.steps == 300 && totals.size() == 300;
      double first10 = std::accumulate(totals.begin(), totals.begin() + 10, 0.0) / 10.0;
      double last10 = std::accumulate(totals.end() - 10, totals.end(), 0.0) / 10.0;
      bool converged = last10 < 0.5 * first10;

      ParamStore untrained;
      init_network_params(untrained, cfg.arch, cfg.seed, cfg.no_share,
                          cfg.adversarial());
      double ucd_before = mean_heldout_ucd(ws, untrained, cfg);
      Checkpoint trained = load_checkpoint(res.final_checkpoint);
      double ucd_after = mean_heldout_ucd(ws, trained.params, cfg);
      bool ucd_ok = ucd_after <= 0.5 * ucd_before;

      // the same smoke test must run clean in the adversarial modes
      bool smoke_ok = true;
      for (TrainMode mode : {TrainMode::Wdis, TrainMode::Unified}) {
        TrainConfig smoke = cfg;
        smoke.mode = mode;
        smoke.epochs = 13;
        smoke.max_steps = 50;
        try {
          TrainResult r = train(smoke, ws.manifest_path,
                                (work / (std::string("smoke_") + mode_name(mode))).string());
          smoke_ok = smoke_ok && r.steps == 50;
        } catch (const std::exception& e) {
          smoke_ok = false;
          c.detail += std::string(mode_name(mode)) + " smoke: " + e.what() + "; ";
        }
      }

      c.seconds = now_seconds() - t0;
      c.pass = steps_ok && converged && ucd_ok && smoke_ok && c.seconds < 900.0;
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "loss %.4f -> %.4f (x%.2f), ucd %.4f -> %.4f (x%.2f)", first10,
                    last10, last10 / first10, ucd_before, ucd_after,
                    ucd_after / ucd_before);
      c.detail += buf;
      if (c.seconds >= 900.0) c.detail += "; runtime over 15 min";
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail += e.what();
      c.seconds = now_seconds() - t0;
    }
    results.push_back(c);
  }
  // 7. pipeline determinism via the CLI
  {
    Criterion c{7, "byte-identical pipeline runs + bitwise resume"};
    double t0 = now_seconds();
    try {
      fs::path config_path = work / "pipeline.conf";
      write_file_atomic(config_path.string(), pipeline_config_text());
      bool ok1 = run_pipeline(work / "runA", config_path, c.detail);
      bool ok2 = run_pipeline(work / "runB", config_path, c.detail);
      bool equal = false;
      if (ok1 && ok2) {
        auto a = dir_contents(work / "runA");
        auto b = dir_contents(work / "runB");
        equal = a.size() == b.size();
        if (!equal)
          c.detail += "file counts differ (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + "); ";
        for (const auto& [rel, bytes] : a) {
          auto it = b.find(rel);
          if (it == b.end() || it->second != bytes) {
            equal = false;
            c.detail += "mismatch at " + rel + "; ";
            break;
          }
        }
      }
      // bitwise resume of the run-A training leg
      bool resume_ok = false;
      if (ok1) {
        fs::path log = work / "resume.log";
        fs::path resume_out = work / "runA_resume";
        int rc = run_cli(
            "train --config " + (work / "runA" / "train.conf").string() +
                " --manifest " + (work / "runA" / "refs" / "manifest.tsv").string() +
                " --out " + resume_out.string() + " --steps 100 --resume " +
                (work / "runA" / "train" / "ckpt_epoch_0015.rfck").string(),
            log);
        if (rc == 0) {
          std::string full_log = slurp(work / "runA" / "train" / "train_log.tsv");
          std::string resumed = slurp(resume_out / "train_log.tsv");
          std::string tail = kTrainLogHeader;
          std::istringstream in(full_log);
          std::string line;
          int data_lines = 0;
          while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (data_lines >= 60) tail += line + "\n";  // epoch 15 ends at step 60
            ++data_lines;
          }
          resume_ok = resumed == tail;
          if (!resume_ok) c.detail += "resume trace differs; ";
          std::string final_a = slurp(work / "runA" / "train" / "ckpt_final.rfck");
          std::string final_r = slurp(resume_out / "ckpt_final.rfck");
          resume_ok = resume_ok && final_a == final_r;
        } else {
          c.detail += "resume run exited " + std::to_string(rc) + "; ";
        }
      }
      c.pass = ok1 && ok2 && equal && resume_ok;
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail += e.what();
    }
    c.seconds = now_seconds() - t0;
    results.push_back(c);
  }
  // 8. weight-factor wiring
  {
    Criterion c{8, "loss-weight wiring (2.001 exact, beta=0 freeze)"};
    double t0 = now_seconds();
    VerifySuiteResult inv = run_invariant_suite(seed + 8);
    c.pass = suite_subset_passes(inv, {"weights", "beta=0"}, c.detail);
    {
      Graph g;
      NodeId one = g.constant_scalar(1.0);
      LossWeights w;
      if (g.scalar(total_loss(g, one, one, one, one, one, -1, w)) != 2.001) {
        c.pass = false;
        c.detail += "2.001 identity failed; ";
      }
    }
    c.seconds = now_seconds() - t0;
    results.push_back(c);
  }

  bool all = true;
  for (const Criterion& c : results) {
    all = all && c.pass;
    char line[512];
    std::snprintf(line, sizeof(line), "%s  criterion %d: %s  [%.1fs]%s%s",
                  c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), c.seconds,
                  c.detail.empty() ? "" : "  -- ", c.detail.c_str());
    std::cout << line << "\n";
  }
  std::cout << (all ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << "\n";
  fs::remove_all(work);
  return all ? 0 : 1;
}
