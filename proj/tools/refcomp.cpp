// refcomp command-line front end: corpus generation, reference retrieval,
// training, completion, evaluation, and the verification suites.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "refcomp/cloud_io.hpp"
#include "refcomp/config.hpp"
#include "refcomp/degradation.hpp"
#include "refcomp/manifest.hpp"
#include "refcomp/metrics.hpp"
#include "refcomp/parallel.hpp"
#include "refcomp/shapes.hpp"
#include "refcomp/trainer.hpp"
#include "refcomp/verify.hpp"

namespace fs = std::filesystem;
using namespace refcomp;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = s.find(',', start);
    std::string tok = s.substr(start, comma - start);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> list_cloud_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    if (ext == ".pcb" || ext == ".xyz") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Class labels from a corpus/targets index.tsv, keyed by file stem.
std::map<std::string, std::string> load_labels(const std::string& dir) {
  std::map<std::string, std::string> labels;
  if (!fs::exists(corpus_index_path(dir))) return labels;
  for (const CorpusIndexRow& row : load_corpus_index(dir))
    labels[fs::path(row.path).stem().string()] = row.class_name;
  return labels;
}

int cmd_gen_corpus(const std::string& classes_csv, int per_class, int points,
                   std::uint64_t seed, const std::string& out_dir) {
  std::vector<std::string> classes = split_csv(classes_csv);
  if (classes.empty()) classes = shape_classes();
  for (const std::string& c : classes) {
    const auto& known = shape_classes();
    if (std::find(known.begin(), known.end(), c) == known.end())
      throw std::invalid_argument("unknown class '" + c + "'");
  }
  auto rows = generate_corpus(classes, per_class, points, seed, out_dir);
  std::cout << "wrote " << rows.size() << " clouds to " << out_dir << "\n";
  return 0;
}

int cmd_make_partials(const std::string& in_dir, const std::string& out_dir,
                      int points, int k, std::uint64_t seed) {
  std::vector<CorpusIndexRow> index = load_corpus_index(in_dir);
  if (index.size() < 2)
    throw std::invalid_argument("make-partials: need at least two source clouds");
  std::vector<PointCloud> clouds(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    clouds[i] = read_cloud((fs::path(in_dir) / index[i].path).string());
    clouds[i].class_label = index[i].class_name;
  }
  fs::create_directories(out_dir);
  std::vector<CorpusIndexRow> out_rows(index.size());
  parallel_for(index.size(), [&](std::size_t i) {
    // Cross-object degradation: the next cloud in the listing acts as the
    // occlusion template.
    const PointCloud& tmpl = clouds[(i + 1) % clouds.size()];
    std::vector<int> sel =
        degradation_union_indices(tmpl, clouds[i], k);
    Rng rng(mix_seed(seed, 0x9a71ceULL, i));
    PointCloud partial = gather_points(clouds[i], sample_indices(sel, points, rng));
    std::string name = fs::path(index[i].path).stem().string() + "_part.pcb";
    write_cloud(partial, (fs::path(out_dir) / name).string());
    out_rows[i] = {name, index[i].class_name, mix_seed(seed, 0x9a71ceULL, i)};
  });
  save_corpus_index(out_rows, out_dir);
  std::cout << "wrote " << out_rows.size() << " partials to " << out_dir << "\n";
  return 0;
}

int cmd_build_refs(const std::string& targets_dir, const std::string& corpus_dir,
                   int k, int top_n, double min_cd, const std::string& scope_str,
                   int partial_size, std::uint64_t seed,
                   const std::string& manifest_path) {
  ClassScope scope;
  if (scope_str == "same-class") scope = ClassScope::SameClass;
  else if (scope_str == "all") scope = ClassScope::AllClasses;
  else throw std::invalid_argument("--scope must be same-class or all");

  std::vector<CorpusIndexRow> corpus_index = load_corpus_index(corpus_dir);
  if (corpus_index.empty()) throw std::invalid_argument("corpus index is empty");
  std::vector<PointCloud> corpus(corpus_index.size());
  for (std::size_t i = 0; i < corpus_index.size(); ++i) {
    corpus[i] = read_cloud((fs::path(corpus_dir) / corpus_index[i].path).string());
    corpus[i].class_label = corpus_index[i].class_name;
    corpus[i] = normalize_unit_sphere(corpus[i]).cloud;  // no-op for generated data
  }
  std::vector<std::string> target_files = list_cloud_files(targets_dir);
  if (target_files.empty()) throw std::invalid_argument("no targets in " + targets_dir);
  std::map<std::string, std::string> target_labels = load_labels(targets_dir);
  fs::path manifest_dir = fs::path(manifest_path).parent_path();
  if (manifest_dir.empty()) manifest_dir = ".";
  fs::create_directories(manifest_dir / "refs");

  struct TargetRefs {
    std::vector<ManifestEntry> rows;
    std::string error;
  };
  std::vector<TargetRefs> results(target_files.size());
  parallel_for(target_files.size(), [&](std::size_t t) {
    PointCloud target = read_cloud(target_files[t]);
    std::string stem = fs::path(target_files[t]).stem().string();
    auto label = target_labels.find(stem);
    if (label != target_labels.end()) target.class_label = label->second;
    if (scope == ClassScope::SameClass && target.class_label.empty()) {
      results[t].error = stem + ": no class label (targets index.tsv missing)";
      return;
    }
    std::vector<ReferencePair> pairs;
    try {
      pairs = build_reference_pairs(target, corpus, k, top_n, min_cd, scope,
                                    partial_size, partial_size,
                                    mix_seed(seed, 0xb81d5ULL, t));
    } catch (const InsufficientReferencesError& e) {
      results[t].error = e.what();
      return;
    }
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_r%zu", r + 1);
      std::string base = "refs/" + stem + suffix;
      write_cloud(pairs[r].partial, (manifest_dir / (base + "_p.pcb")).string());
      write_cloud(pairs[r].complete, (manifest_dir / (base + "_c.pcb")).string());
      write_cloud(pairs[r].mask, (manifest_dir / (base + "_m.pcb")).string());
      ManifestEntry e;
      e.target_path = fs::relative(target_files[t], manifest_dir).string();
      e.rank = static_cast<int>(r + 1);
      e.partial_path = base + "_p.pcb";
      e.complete_path = base + "_c.pcb";
      e.mask_path = base + "_m.pcb";
      e.cd = pairs[r].cd_to_template;
      results[t].rows.push_back(std::move(e));
    }
  });
  ReferenceManifest manifest;
  std::string failures;
  for (const TargetRefs& r : results) {
    if (!r.error.empty()) failures += "  " + r.error + "\n";
    for (const ManifestEntry& e : r.rows) manifest.entries.push_back(e);
  }
  if (!failures.empty())
    throw std::invalid_argument("insufficient references for:\n" + failures);
  save_manifest(manifest, manifest_path);
  std::cout << "wrote " << manifest.entries.size() << " manifest rows to "
            << manifest_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& preset,
              const std::string& mode_str, const std::string& manifest_path,
              const std::string& out_dir, int steps_override,
              std::int64_t seed_override, bool fixed_ref, bool only_gan,
              bool no_share, const std::string& resume) {
  TrainConfig base = preset == "desk" ? TrainConfig::desk_preset()
                                      : TrainConfig::paper_defaults();
  TrainConfig cfg = load_config_file(config_path, base);
  if (!mode_str.empty()) cfg.mode = parse_mode(mode_str);
  if (steps_override > 0) cfg.max_steps = steps_override;
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (fixed_ref) cfg.fixed_ref = true;
  if (only_gan) cfg.only_gan = true;
  if (no_share) cfg.no_share = true;
  TrainResult res = train(cfg, manifest_path, out_dir, resume, &std::cout);
  std::cout << "trained " << res.steps << " steps; final checkpoint "
            << res.final_checkpoint << "\n";
  return 0;
}

int cmd_complete(const std::string& ckpt_path, const std::string& input_path,
                 const std::string& manifest_path, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  ReferenceManifest manifest = load_manifest(manifest_path, true);
  fs::path manifest_dir = fs::path(manifest_path).parent_path();
  std::string want_stem = fs::path(input_path).stem().string();
  const ManifestEntry* best = nullptr;
  for (const ManifestEntry& e : manifest.entries) {
    if (fs::path(e.target_path).stem().string() != want_stem) continue;
    if (!best || e.rank < best->rank) best = &e;
  }
  if (!best)
    throw std::invalid_argument("input " + input_path + " has no manifest entry");
  ReferencePair ref;
  ref.partial = read_cloud((manifest_dir / best->partial_path).string());
  ref.complete = read_cloud((manifest_dir / best->complete_path).string());
  ref.mask = read_cloud((manifest_dir / best->mask_path).string());
  ref.cd_to_template = best->cd;
  PointCloud input = read_cloud(input_path);
  if (static_cast<int>(input.size()) != ckpt.config.arch.partial_size)
    input = resample(input, ckpt.config.arch.partial_size, SampleStrategy::Random, 0);
  PointCloud completed = infer(ckpt.params, ckpt.config, input, ref);
  write_cloud(completed, out_path);
  std::cout << "wrote " << completed.size() << " points to " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& metrics_csv, double epsilon,
             const std::string& out_path, const std::string& per_item_path) {
  std::vector<std::string> wanted = split_csv(metrics_csv);
  if (wanted.empty()) throw std::invalid_argument("--metrics list is empty");
  std::set<std::string> known{"cd", "ucd", "f1", "mmd"};
  for (const std::string& m : wanted)
    if (!known.count(m)) throw std::invalid_argument("unknown metric '" + m + "'");

  std::vector<std::string> pred_files = list_cloud_files(pred_dir);
  std::vector<std::string> gt_files = list_cloud_files(gt_dir);
  if (pred_files.empty() || gt_files.empty())
    throw std::invalid_argument("eval: empty prediction or ground-truth directory");

  bool needs_pairs = false;
  for (const std::string& m : wanted)
    if (m != "mmd") needs_pairs = true;
  std::vector<std::pair<std::string, std::string>> pairs;
  if (needs_pairs) {
    std::map<std::string, std::string> gt_by_stem;
    for (const std::string& f : gt_files)
      gt_by_stem[fs::path(f).stem().string()] = f;
    for (const std::string& f : pred_files) {
      auto it = gt_by_stem.find(fs::path(f).stem().string());
      if (it == gt_by_stem.end())
        throw std::invalid_argument("eval: no ground-truth file pairs with " + f);
      pairs.push_back({f, it->second});
    }
  }

  struct ItemScores {
    double cd = 0, ucd = 0, f1 = 0;
  };
  std::vector<ItemScores> scores(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    PointCloud pred = read_cloud(pairs[i].first);
    PointCloud gt = read_cloud(pairs[i].second);
    scores[i].cd = chamfer(pred, gt);
    scores[i].ucd = ucd(gt, pred);  // gt dir holds the partial inputs
    scores[i].f1 = f1_score(pred, gt, epsilon).f1;
  });

  std::vector<MetricReport> reports;
  auto mean_of = [&](auto getter) {
    double acc = 0;
    for (const ItemScores& s : scores) acc += getter(s);
    return acc / static_cast<double>(scores.size());
  };
  for (const std::string& m : wanted) {
    MetricReport rep;
    rep.name = m;
    if (m == "cd") {
      rep.value = mean_of([](const ItemScores& s) { return s.cd; });
      rep.scale_factor = 1e4;
    } else if (m == "ucd") {
      rep.value = mean_of([](const ItemScores& s) { return s.ucd; });
      rep.scale_factor = 1e4;
    } else if (m == "f1") {
      rep.value = mean_of([](const ItemScores& s) { return s.f1; });
      rep.scale_factor = 1e2;
    } else {
      std::vector<PointCloud> preds, gts;
      for (const std::string& f : pred_files) preds.push_back(read_cloud(f));
      for (const std::string& f : gt_files) gts.push_back(read_cloud(f));
      rep.value = mmd(preds, gts);
      rep.scale_factor = 1e2;
    }
    if (m != "mmd")
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        double v = m == "cd" ? scores[i].cd : m == "ucd" ? scores[i].ucd : scores[i].f1;
        rep.per_item.push_back({fs::path(pairs[i].first).stem().string(), v});
      }
    reports.push_back(std::move(rep));
  }

  std::string buf;
  for (const MetricReport& r : reports) {
    buf += r.name + "\t" + format_real17(r.value) + "\t" +
           format_real17(r.scaled()) + "\n";
    std::cout << r.name << "\t" << format_real17(r.value) << "\t"
              << format_real17(r.scaled()) << "\n";
  }
  write_file_atomic(out_path, buf);
  if (!per_item_path.empty()) {
    std::string items = "#metric\titem\traw\n";
    for (const MetricReport& r : reports)
      for (const auto& [id, v] : r.per_item)
        items += r.name + "\t" + id + "\t" + format_real17(v) + "\n";
    write_file_atomic(per_item_path, items);
  }
  return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  VerifySuiteResult result;
  if (suite == "gradcheck") result = run_gradcheck_suite(seed);
  else if (suite == "oracle") result = run_oracle_suite(seed);
  else if (suite == "invariants") result = run_invariant_suite(seed);
  else throw std::invalid_argument("--suite must be gradcheck, oracle, or invariants");
  print_suite(result, std::cout);
  return result.all_pass() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"refcomp: reference-guided unpaired point cloud completion"};
  app.require_subcommand(1);

  // gen-corpus
  std::string gc_classes = "plane-slab,box,cylinder,torus";
  int gc_per_class = 50, gc_points = 2048;
  std::uint64_t gc_seed = 0;
  std::string gc_out;
  auto* gen = app.add_subcommand("gen-corpus", "Generate the procedural shape corpus");
  gen->add_option("--classes", gc_classes, "Comma-separated class list")
      ->capture_default_str();
  gen->add_option("--per-class", gc_per_class, "Shapes per class")->capture_default_str();
  gen->add_option("--points", gc_points, "Points per cloud (complete size: 2048)")
      ->capture_default_str();
  gen->add_option("--seed", gc_seed, "Corpus seed")->capture_default_str();
  gen->add_option("--out", gc_out, "Output directory")->required();

  // make-partials
  std::string mp_in, mp_out;
  int mp_points = 1024, mp_k = 15;
  std::uint64_t mp_seed = 0;
  auto* mp = app.add_subcommand(
      "make-partials", "Degrade corpus shapes into partial target clouds");
  mp->add_option("--in", mp_in, "Source corpus directory (with index.tsv)")->required();
  mp->add_option("--out", mp_out, "Output directory")->required();
  mp->add_option("--points", mp_points, "Partial size (1024)")->capture_default_str();
  mp->add_option("--k", mp_k, "Degradation k nearest neighbours (15)")
      ->capture_default_str();
  mp->add_option("--seed", mp_seed, "Seed")->capture_default_str();

  // build-refs
  std::string br_targets, br_corpus, br_scope = "same-class", br_out;
  int br_k = 15, br_top_n = 3, br_partial = 1024;
  double br_min_cd = 1e-4;
  std::uint64_t br_seed = 0;
  auto* br = app.add_subcommand("build-refs",
                                "Retrieve reference pairs for every target");
  br->add_option("--targets", br_targets, "Directory of partial targets")->required();
  br->add_option("--corpus", br_corpus, "Directory of complete clouds")->required();
  br->add_option("--k", br_k, "Degradation k nearest neighbours (15)")
      ->capture_default_str();
  br->add_option("--top-n", br_top_n, "References kept per target (3)")
      ->capture_default_str();
  br->add_option("--min-cd", br_min_cd,
                 "Minimum CD to the template, normalized units (1e-4)")
      ->capture_default_str();
  br->add_option("--scope", br_scope, "Retrieval scope: same-class|all")
      ->capture_default_str();
  br->add_option("--partial-size", br_partial, "Reference partial/mask size (1024)")
      ->capture_default_str();
  br->add_option("--seed", br_seed, "Seed")->capture_default_str();
  br->add_option("--out", br_out, "Manifest output path")->required();

  // train
  std::string tr_config, tr_preset = "paper", tr_mode, tr_manifest, tr_out, tr_resume;
  int tr_steps = 0;
  std::int64_t tr_seed = -1;
  bool tr_fixed = false, tr_only_gan = false, tr_no_share = false;
  auto* tr = app.add_subcommand("train", "Train the completion model");
  tr->add_option("--config", tr_config, "Config file (key = value lines)")->required();
  tr->add_option("--preset", tr_preset,
                 "Base preset under the config: paper (600 epochs, batch 50) or "
                 "desk (30 epochs, batch 8)")
      ->capture_default_str();
  tr->add_option("--mode", tr_mode, "plain|wdis|unified (overrides config)");
  tr->add_option("--manifest", tr_manifest, "Reference manifest path")->required();
  tr->add_option("--out", tr_out, "Checkpoint/log output directory")->required();
  tr->add_option("--steps", tr_steps, "Stop after N steps (0 = run all epochs)")
      ->capture_default_str();
  tr->add_option("--seed", tr_seed, "Seed override");
  tr->add_flag("--fixed-ref", tr_fixed, "Always use the rank-1 reference pair");
  tr->add_flag("--only-gan", tr_only_gan,
               "Train on the adversarial objective alone");
  tr->add_flag("--no-share", tr_no_share,
               "Give the reference and target branches separate parameters");
  tr->add_option("--resume", tr_resume, "Resume from a checkpoint");

  // complete
  std::string cp_ckpt, cp_input, cp_refs, cp_out;
  auto* cp = app.add_subcommand("complete", "Complete one partial cloud");
  cp->add_option("--ckpt", cp_ckpt, "Checkpoint file")->required();
  cp->add_option("--input", cp_input, "Partial input cloud")->required();
  cp->add_option("--refs", cp_refs, "Reference manifest")->required();
  cp->add_option("--out", cp_out, "Output cloud path")->required();

  // eval
  std::string ev_pred, ev_gt, ev_metrics = "cd,ucd,f1,mmd", ev_out, ev_items;
  double ev_eps = 0.03;
  auto* ev = app.add_subcommand("eval", "Evaluate completions against references");
  ev->add_option("--pred", ev_pred, "Directory of predicted clouds")->required();
  ev->add_option("--gt", ev_gt, "Directory of reference clouds")->required();
  ev->add_option("--metrics", ev_metrics, "Subset of cd,ucd,f1,mmd")
      ->capture_default_str();
  ev->add_option("--epsilon", ev_eps, "F1 L2 threshold (0.03)")->capture_default_str();
  ev->add_option("--out", ev_out, "Report TSV path")->required();
  ev->add_option("--per-item", ev_items, "Optional per-item TSV path");

  // verify
  std::string vf_suite;
  std::uint64_t vf_seed = 0;
  auto* vf = app.add_subcommand("verify", "Run a verification suite");
  vf->add_option("--suite", vf_suite, "gradcheck|oracle|invariants")->required();
  vf->add_option("--seed", vf_seed, "Seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_corpus(gc_classes, gc_per_class, gc_points, gc_seed, gc_out);
    if (mp->parsed())
      return cmd_make_partials(mp_in, mp_out, mp_points, mp_k, mp_seed);
    if (br->parsed())
      return cmd_build_refs(br_targets, br_corpus, br_k, br_top_n, br_min_cd,
                            br_scope, br_partial, br_seed, br_out);
    if (tr->parsed())
      return cmd_train(tr_config, tr_preset, tr_mode, tr_manifest, tr_out, tr_steps,
                       tr_seed, tr_fixed, tr_only_gan, tr_no_share, tr_resume);
    if (cp->parsed()) return cmd_complete(cp_ckpt, cp_input, cp_refs, cp_out);
    if (ev->parsed())
      return cmd_eval(ev_pred, ev_gt, ev_metrics, ev_eps, ev_out, ev_items);
    if (vf->parsed()) return cmd_verify(vf_suite, vf_seed);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
