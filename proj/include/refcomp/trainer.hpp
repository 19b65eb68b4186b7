#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "refcomp/checkpoint.hpp"
#include "refcomp/cloud_io.hpp"
#include "refcomp/config.hpp"
#include "refcomp/degradation.hpp"
#include "refcomp/losses.hpp"
#include "refcomp/manifest.hpp"
#include "refcomp/network.hpp"

namespace refcomp {

/// One training target with its retrieved reference pairs (ascending CD).
struct TrainItem {
  PointCloud partial;
  std::vector<ReferencePair> refs;
  std::string id;
};

inline std::vector<TrainItem> load_training_set(const ReferenceManifest& manifest,
                                                const std::string& manifest_dir,
                                                const TrainConfig& cfg) {
  namespace fs = std::filesystem;
  std::vector<TrainItem> items;
  std::map<std::string, std::size_t> by_target;
  auto check_size = [&](const PointCloud& c, int want, const std::string& what) {
    if (static_cast<int>(c.size()) != want)
      throw std::runtime_error(what + ": expected " + std::to_string(want) +
                               " points, found " + std::to_string(c.size()));
  };
  for (const ManifestEntry& e : manifest.entries) {
    auto it = by_target.find(e.target_path);
    if (it == by_target.end()) {
      TrainItem item;
      item.partial = read_cloud((fs::path(manifest_dir) / e.target_path).string());
      check_size(item.partial, cfg.arch.partial_size, e.target_path);
      item.id = e.target_path;
      it = by_target.emplace(e.target_path, items.size()).first;
      items.push_back(std::move(item));
    }
    ReferencePair pair;
    pair.partial = read_cloud((fs::path(manifest_dir) / e.partial_path).string());
    pair.complete = read_cloud((fs::path(manifest_dir) / e.complete_path).string());
    pair.mask = read_cloud((fs::path(manifest_dir) / e.mask_path).string());
    check_size(pair.partial, cfg.arch.partial_size, e.partial_path);
    check_size(pair.complete, cfg.arch.complete_size, e.complete_path);
    check_size(pair.mask, cfg.arch.partial_size, e.mask_path);
    pair.cd_to_template = e.cd;
    pair.source_id = e.complete_path;
    items[it->second].refs.push_back(std::move(pair));
  }
  for (const TrainItem& item : items)
    if (item.refs.empty())
      throw std::runtime_error("manifest has no references for " + item.id);
  return items;
}

struct StepResult {
  LossBreakdown losses;
  double lr = 0.0;
};

struct StepGraph {
  NodeId total = -1;
  NodeId adv_disc = -1;
  LossBreakdown losses;
};

/// Build the full two-branch graph for one batch: encoders, LSFM, decoders,
/// the four CD losses, the Wasserstein alignment, and (in adversarial modes)
/// both adversarial objectives. No parameters are updated here.
inline StepGraph build_step_graph(Graph& g, ParamStore& params,
                                  const TrainConfig& cfg, std::uint64_t step,
                                  const std::vector<const TrainItem*>& batch,
                                  const std::vector<const ReferencePair*>& refs) {
  if (batch.empty() || batch.size() != refs.size())
    throw std::invalid_argument("train_step: empty or mismatched batch");
  const ModelArchitecture& arch = cfg.arch;
  const Branch ref_branch = cfg.no_share ? Branch::Reference : Branch::Shared;
  const Branch tar_branch = cfg.no_share ? Branch::Target : Branch::Shared;
  const int b = static_cast<int>(batch.size());
  const double inv_b = 1.0 / static_cast<double>(b);

  std::vector<NodeId> zpy, zmy, zcy, zpx, cy_nodes, px_nodes;
  for (int i = 0; i < b; ++i) {
    NodeId px = g.constant(batch[static_cast<std::size_t>(i)]->partial);
    NodeId py = g.constant(refs[static_cast<std::size_t>(i)]->partial);
    NodeId my = g.constant(refs[static_cast<std::size_t>(i)]->mask);
    NodeId cy = g.constant(refs[static_cast<std::size_t>(i)]->complete);
    px_nodes.push_back(px);
    cy_nodes.push_back(cy);
    zpy.push_back(encode_partial(g, params, arch, py, ref_branch));
    zmy.push_back(encode_mask(g, params, arch, my));
    zcy.push_back(encode_complete(g, params, arch, cy));
    zpx.push_back(encode_partial(g, params, arch, px, tar_branch));
  }
  NodeId Zpy = g.stack_rows(zpy);
  NodeId Zmy = g.stack_rows(zmy);
  NodeId Zcy = g.stack_rows(zcy);
  NodeId Zpx = g.stack_rows(zpx);

  // Non-finite latents would otherwise reach the assignment solver; fail
  // here with the batch identities instead.
  auto abort_non_finite = [&](NodeId node) {
    for (double v : g.value(node))
      if (!std::isfinite(v)) {
        std::string ids;
        for (const TrainItem* item : batch) ids += " " + item->id;
        throw std::runtime_error("train_step: non-finite activations at step " +
                                 std::to_string(step) + "; batch:" + ids);
      }
  };
  NodeId Zcy_hat = lsfm(g, params, arch, Zpy, Zmy, ref_branch);
  NodeId Zcx_hat = lsfm(g, params, arch, Zpx, Zmy, tar_branch);
  abort_non_finite(Zcy);
  abort_non_finite(Zcy_hat);
  abort_non_finite(Zcx_hat);
  NodeId Cx_hat = decode_flat(g, params, arch, Zcx_hat, DecoderHead::Main, tar_branch);

  std::vector<NodeId> cx_hat_clouds;
  for (int i = 0; i < b; ++i)
    cx_hat_clouds.push_back(
        g.reshape(g.slice_rows(Cx_hat, i, 1), arch.complete_size, 3));

  StepGraph out;
  NodeId total = -1;
  NodeId adv_gen = -1, adv_disc = -1;

  if (!cfg.only_gan) {
    NodeId Cy_hat = decode_flat(g, params, arch, Zcy_hat, DecoderHead::Main, ref_branch);
    NodeId Cy_r = decode_flat(g, params, arch, Zcy_hat, DecoderHead::Aux);
    NodeId Px_r = decode_flat(g, params, arch, Zpx, DecoderHead::Main, tar_branch);
    NodeId cd_ref = -1, cd_r = -1, cd_tar = -1, cd_p = -1;
    for (int i = 0; i < b; ++i) {
      const PointCloud& c_y = refs[static_cast<std::size_t>(i)]->complete;
      const PointCloud& p_x = batch[static_cast<std::size_t>(i)]->partial;
      NodeId cyh = g.reshape(g.slice_rows(Cy_hat, i, 1), arch.complete_size, 3);
      NodeId cyr = g.reshape(g.slice_rows(Cy_r, i, 1), arch.complete_size, 3);
      NodeId pxr = g.reshape(g.slice_rows(Px_r, i, 1), arch.complete_size, 3);
      NodeId cxh = cx_hat_clouds[static_cast<std::size_t>(i)];
      // Deg(c_x_hat): KNN selection against the live completion values; only
      // the gathered coordinates carry gradients.
      std::vector<int> deg_idx = degradation_sample_indices(
          p_x, g.value(cxh).data(), arch.complete_size, cfg.degrade_k_train,
          arch.partial_size, mix_seed(cfg.seed, step, static_cast<std::uint64_t>(i)));
      NodeId pxh = g.gather_rows(cxh, deg_idx);
      NodeId t_ref = cd_loss(g, cyh, c_y);
      NodeId t_r = cd_loss(g, cyr, c_y);
      NodeId t_tar = cd_loss(g, pxh, p_x);
      NodeId t_p = cd_loss(g, pxr, p_x);
      cd_ref = i == 0 ? t_ref : g.add(cd_ref, t_ref);
      cd_r = i == 0 ? t_r : g.add(cd_r, t_r);
      cd_tar = i == 0 ? t_tar : g.add(cd_tar, t_tar);
      cd_p = i == 0 ? t_p : g.add(cd_p, t_p);
    }
    cd_ref = g.scale(cd_ref, inv_b);
    cd_r = g.scale(cd_r, inv_b);
    cd_tar = g.scale(cd_tar, inv_b);
    cd_p = g.scale(cd_p, inv_b);
    NodeId wass = wasserstein_loss(g, Zcy_hat, Zcy);
    out.losses.cd_ref = g.scalar(cd_ref);
    out.losses.cd_aux_ref = g.scalar(cd_r);
    out.losses.cd_tar = g.scalar(cd_tar);
    out.losses.cd_aux_tar = g.scalar(cd_p);
    out.losses.wasserstein = g.scalar(wass);
    total = total_loss(g, cd_ref, cd_r, cd_tar, cd_p, wass, -1, cfg.weights);
  }

  if (cfg.adversarial()) {
    NodeId fake_z = g.concat_rows(Zcy_hat, Zcx_hat);
    NodeId s_fake_z = discriminate_latent(g, params, arch, fake_z);
    std::vector<NodeId> s_fake_c_items;
    for (int i = 0; i < b; ++i)
      s_fake_c_items.push_back(discriminate_cloud(
          g, params, arch, cx_hat_clouds[static_cast<std::size_t>(i)]));
    NodeId s_fake_c = g.stack_rows(s_fake_c_items);
    // Detached copies for the discriminator objective, so its backward pass
    // stays inside the discriminators.
    NodeId s_fake_z_d = discriminate_latent(g, params, arch, g.stop_gradient(fake_z));
    NodeId s_real_z_d = discriminate_latent(g, params, arch, g.stop_gradient(Zcy));
    std::vector<NodeId> s_fake_c_d_items, s_real_c_d_items;
    for (int i = 0; i < b; ++i) {
      s_fake_c_d_items.push_back(discriminate_cloud(
          g, params, arch,
          g.stop_gradient(cx_hat_clouds[static_cast<std::size_t>(i)])));
      s_real_c_d_items.push_back(discriminate_cloud(
          g, params, arch, cy_nodes[static_cast<std::size_t>(i)]));
    }
    NodeId s_fake_c_d = g.stack_rows(s_fake_c_d_items);
    NodeId s_real_c_d = g.stack_rows(s_real_c_d_items);
    auto [gen_z, disc_z_unused] = adversarial_losses(g, s_real_z_d, s_fake_z);
    auto [gen_c, disc_c_unused] = adversarial_losses(g, s_real_c_d, s_fake_c);
    (void)disc_z_unused;
    (void)disc_c_unused;
    auto [gen_z_unused, disc_z] = adversarial_losses(g, s_real_z_d, s_fake_z_d);
    auto [gen_c_unused, disc_c] = adversarial_losses(g, s_real_c_d, s_fake_c_d);
    (void)gen_z_unused;
    (void)gen_c_unused;
    adv_gen = g.scale(g.add(gen_z, gen_c), 0.5);
    adv_disc = g.scale(g.add(disc_z, disc_c), 0.5);
    out.losses.adv_gen = g.scalar(adv_gen);
    out.losses.adv_disc = g.scalar(adv_disc);
    if (cfg.only_gan) {
      total = g.scale(adv_gen, cfg.weights.lambda_adv);
    } else {
      total = g.add(total, g.scale(adv_gen, cfg.weights.lambda_adv));
    }
  }

  out.losses.total = g.scalar(total);
  if (!std::isfinite(out.losses.total)) {
    std::string ids;
    for (const TrainItem* item : batch) ids += " " + item->id;
    throw std::runtime_error("train_step: non-finite loss at step " +
                             std::to_string(step) + "; batch:" + ids);
  }
  out.total = total;
  out.adv_disc = adv_disc;
  return out;
}

/// One optimization step over a batch. Discriminators update first on the
/// adversarial loss alone; the generator update then excludes them. Both
/// phases read the same forward values.
inline StepResult train_step(ParamStore& params, const TrainConfig& cfg,
                             std::uint64_t step,
                             const std::vector<const TrainItem*>& batch,
                             const std::vector<const ReferencePair*>& refs) {
  Graph g;
  StepGraph sg = build_step_graph(g, params, cfg, step, batch, refs);
  OptimizerConfig opt = cfg.optimizer;
  StepResult out;
  out.losses = sg.losses;
  out.lr = cosine_lr(opt, step);
  if (cfg.adversarial()) {
    params.zero_grads();
    g.backward(sg.adv_disc);
    optimizer_step(params, opt, step, is_discriminator_param);
    params.zero_grads();
    g.backward(sg.total);
    optimizer_step(params, opt, step,
                   [](const std::string& n) { return !is_discriminator_param(n); });
  } else {
    params.zero_grads();
    g.backward(sg.total);
    optimizer_step(params, opt, step);
  }
  return out;
}

inline std::uint64_t steps_per_epoch(std::size_t n_items, int batch_size) {
  return (n_items + static_cast<std::size_t>(batch_size) - 1) /
         static_cast<std::size_t>(batch_size);
}

inline std::string format_log_line(std::uint64_t step, const LossBreakdown& l,
                                   double lr) {
  std::string s = std::to_string(step);
  for (double v : {l.cd_ref, l.cd_aux_ref, l.cd_tar, l.cd_aux_tar, l.wasserstein,
                   l.adv_gen, l.adv_disc, l.total, lr})
    s += "\t" + format_real17(v);
  return s + "\n";
}

constexpr const char* kTrainLogHeader =
    "#step\tcd_ref\tcd_r\tcd_tar\tcd_p\twass\tadv_g\tadv_d\ttotal\tlr\n";

struct TrainResult {
  std::uint64_t steps = 0;
  std::string final_checkpoint;
  std::string log_path;
};

/// Full training loop: seeded shuffling, per-iteration reference sampling,
/// cosine schedule over the run's total step count, a checkpoint per epoch,
/// and a per-step TSV loss log. Resume restarts at the checkpoint's epoch
/// boundary and reproduces the remaining trace of the uninterrupted run.
inline TrainResult train(TrainConfig cfg, const std::string& manifest_path,
                         const std::string& out_dir,
                         const std::string& resume_path = "",
                         std::ostream* console = nullptr) {
  namespace fs = std::filesystem;
  cfg.validate();
  ReferenceManifest manifest = load_manifest(manifest_path, true);
  std::string manifest_dir = fs::path(manifest_path).parent_path().string();
  std::vector<TrainItem> items = load_training_set(manifest, manifest_dir, cfg);
  if (items.empty()) throw std::runtime_error("train: manifest has no targets");
  const std::uint64_t spe = steps_per_epoch(items.size(), cfg.batch_size);
  std::uint64_t total_steps = spe * static_cast<std::uint64_t>(cfg.epochs);
  if (cfg.max_steps > 0)
    total_steps = std::min<std::uint64_t>(total_steps,
                                          static_cast<std::uint64_t>(cfg.max_steps));
  cfg.optimizer.total_steps = total_steps;

  ParamStore params;
  std::uint64_t step = 0;
  if (!resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_path);
    ckpt.config.optimizer.total_steps = cfg.optimizer.total_steps;
    if (serialize_config(ckpt.config) != serialize_config(cfg))
      throw std::runtime_error("resume: checkpoint config does not match " +
                               resume_path);
    params = std::move(ckpt.params);
    step = ckpt.step;
    if (step % spe != 0 && step < total_steps)
      throw std::runtime_error("resume: checkpoint is not at an epoch boundary");
  } else {
    init_network_params(params, cfg.arch, cfg.seed, cfg.no_share, cfg.adversarial());
  }

  fs::create_directories(out_dir);
  std::string log_path = (fs::path(out_dir) / "train_log.tsv").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open " + log_path);
  log << kTrainLogHeader;

  std::uint64_t start_epoch = step / spe;
  for (std::uint64_t epoch = start_epoch;
       epoch < static_cast<std::uint64_t>(cfg.epochs) && step < total_steps; ++epoch) {
    Rng rng_epoch(mix_seed(cfg.seed, 0xe90c4a13ULL, epoch));
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_epoch.shuffle(order);
    for (std::size_t at = 0; at < order.size() && step < total_steps;
         at += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const TrainItem*> batch;
      std::vector<const ReferencePair*> refs;
      for (std::size_t i = at; i < end; ++i) {
        const TrainItem& item = items[order[i]];
        const ReferencePair& ref = cfg.fixed_ref
                                       ? item.refs.front()
                                       : select_training_pair(item.refs, rng_epoch);
        batch.push_back(&item);
        refs.push_back(&ref);
      }
      StepResult res = train_step(params, cfg, step, batch, refs);
      log << format_log_line(step, res.losses, res.lr);
      ++step;
      if (console && step % 10 == 0)
        *console << "step " << step << "/" << total_steps
                 << " total=" << res.losses.total << "\n";
    }
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%04llu.rfck",
                  static_cast<unsigned long long>(epoch + 1));
    save_checkpoint((fs::path(out_dir) / name).string(), params, cfg, step);
  }
  log.close();

  TrainResult result;
  result.steps = step;
  result.log_path = log_path;
  result.final_checkpoint = (fs::path(out_dir) / "ckpt_final.rfck").string();
  save_checkpoint(result.final_checkpoint, params, cfg, step);
  return result;
}

/// Complete one partial cloud with a supplied reference pair. The input is
/// normalized to the unit-sphere frame for the network and the output is
/// mapped back into the input's original frame.
inline PointCloud infer(ParamStore& params, const TrainConfig& cfg,
                        const PointCloud& p_x_raw, const ReferencePair& ref) {
  if (static_cast<int>(p_x_raw.size()) != cfg.arch.partial_size)
    throw std::invalid_argument("infer: input must have " +
                                std::to_string(cfg.arch.partial_size) + " points");
  if (static_cast<int>(ref.mask.size()) != cfg.arch.partial_size)
    throw std::invalid_argument("infer: reference mask must have " +
                                std::to_string(cfg.arch.partial_size) + " points");
  NormalizeResult norm = normalize_unit_sphere(p_x_raw);
  const Branch tar_branch = cfg.no_share ? Branch::Target : Branch::Shared;
  try {
    validate_architecture(params, cfg.arch, cfg.no_share, cfg.adversarial());
    Graph g;
    NodeId mask = g.constant(ref.mask);
    NodeId z_mask = encode_mask(g, params, cfg.arch, mask);
    NodeId px = g.constant(norm.cloud);
    NodeId completed = complete_forward(g, params, cfg.arch, px, z_mask, tar_branch);
    PointCloud out = cloud_from_node(g, completed);
    return denormalize(out, norm.centroid, norm.scale);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(
        std::string("infer: checkpoint/architecture mismatch: ") + e.what());
  }
}

}  // namespace refcomp
