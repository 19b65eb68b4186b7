#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "refcomp/autodiff.hpp"
#include "refcomp/geometry.hpp"
#include "refcomp/param_store.hpp"
#include "refcomp/rng.hpp"

namespace refcomp {

/// Channel widths and sizes for every network component. The defaults are
/// the full-size configuration; tests and desk-scale presets shrink them.
struct ModelArchitecture {
  int latent_width = 256;
  int enc_hidden = 128;  // per-point hidden width of E_p / E_m / E_c
  int lsfm_width = 512;
  int lsfm_blocks = 5;
  std::vector<int> decoder_hidden = {512, 512, 1024, 3072};
  int partial_size = 1024;
  int complete_size = 2048;
  std::vector<int> disc_latent_hidden = {256, 64};
  int disc_cloud_hidden = 64;  // per-point 3 -> hidden -> feat, then head
  int disc_cloud_feat = 128;
  int disc_cloud_head = 64;
};

/// Which parameter namespace a forward pass reads. The reference and target
/// branches normally share one set (Shared); the no-share ablation gives each
/// branch its own prefixed copy of E_p, the LSFM, and D_c.
enum class Branch { Shared, Reference, Target };

inline const char* branch_prefix(Branch b) {
  switch (b) {
    case Branch::Reference: return "ref.";
    case Branch::Target: return "tar.";
    default: return "";
  }
}

enum class DecoderHead { Main, Aux };

namespace detail {

inline void init_entry(ParamStore& store, const std::string& name,
                       std::vector<std::size_t> shape, std::uint64_t seed,
                       bool is_weight) {
  Param& p = store.create(name, std::move(shape));
  if (!is_weight) return;  // biases start at zero
  // Glorot-uniform; each entry's stream is derived from its name so the
  // initialization is independent of registration order.
  Rng rng(mix_seed(seed, hash_name(name)));
  double fan_in = static_cast<double>(p.rows());
  double fan_out = static_cast<double>(p.cols());
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : p.value) v = rng.uniform(-limit, limit);
}

inline void init_linear(ParamStore& store, const std::string& name, int in, int out,
                        std::uint64_t seed) {
  init_entry(store, name + ".w",
             {static_cast<std::size_t>(in), static_cast<std::size_t>(out)}, seed, true);
  init_entry(store, name + ".b", {1, static_cast<std::size_t>(out)}, seed, false);
}

/// x * W + b
inline NodeId linear(Graph& g, ParamStore& store, const std::string& name, NodeId x) {
  return g.affine(x, g.param(store, name + ".w"), g.param(store, name + ".b"), false);
}

/// relu(x * W + b), fused
inline NodeId linear_relu(Graph& g, ParamStore& store, const std::string& name,
                          NodeId x) {
  return g.affine(x, g.param(store, name + ".w"), g.param(store, name + ".b"), true);
}

inline void init_encoder(ParamStore& store, const std::string& name,
                         const ModelArchitecture& arch, std::uint64_t seed) {
  init_linear(store, name + ".l1", 3, arch.enc_hidden, seed);
  init_linear(store, name + ".l2", arch.enc_hidden, arch.latent_width, seed);
}

/// Two per-point layers with max-pool: a symmetric (permutation-invariant)
/// set function from N x 3 to 1 x latent.
inline NodeId encoder_forward(Graph& g, ParamStore& store, const std::string& name,
                              NodeId cloud) {
  NodeId h = linear_relu(g, store, name + ".l1", cloud);
  h = linear_relu(g, store, name + ".l2", h);
  return g.max_rows(h);
}

inline void require_cloud_shape(const Graph& g, NodeId cloud, int expected_points,
                                const char* who) {
  if (g.cols(cloud) != 3 || g.rows(cloud) != expected_points)
    throw std::invalid_argument(std::string(who) + ": expected (" +
                                std::to_string(expected_points) + "x3) cloud, got (" +
                                std::to_string(g.rows(cloud)) + "x" +
                                std::to_string(g.cols(cloud)) + ")");
}

}  // namespace detail

/// Enumerate every linear layer of the model as (name, fan_in, fan_out).
/// Shared by initialization and checkpoint/architecture validation.
inline void for_each_network_layer(
    const ModelArchitecture& arch, bool no_share, bool with_discriminators,
    const std::function<void(const std::string&, int, int)>& layer) {
  auto mlp = [&](const std::string& base, int in, const std::vector<int>& hidden,
                 int out) {
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layer(base + ".l" + std::to_string(i + 1), in, hidden[i]);
      in = hidden[i];
    }
    layer(base + ".l" + std::to_string(hidden.size() + 1), in, out);
  };
  auto encoder = [&](const std::string& base) {
    layer(base + ".l1", 3, arch.enc_hidden);
    layer(base + ".l2", arch.enc_hidden, arch.latent_width);
  };
  auto shared_trio = [&](const std::string& prefix) {
    encoder(prefix + "enc_p");
    const int L = arch.latent_width, W = arch.lsfm_width;
    layer(prefix + "lsfm.lift_p", L, W);
    layer(prefix + "lsfm.lift_m", L, W);
    for (int i = 1; i <= arch.lsfm_blocks; ++i)
      layer(prefix + "lsfm.res" + std::to_string(i), W, W);
    layer(prefix + "lsfm.fuse_res", W, W);
    layer(prefix + "lsfm.proj1", 2 * W, W);
    layer(prefix + "lsfm.proj2", 2 * W, W);
    layer(prefix + "lsfm.out", W, L);
    mlp(prefix + "dec_main", L, arch.decoder_hidden, 3 * arch.complete_size);
  };
  if (no_share) {
    shared_trio(branch_prefix(Branch::Reference));
    shared_trio(branch_prefix(Branch::Target));
  } else {
    shared_trio("");
  }
  encoder("enc_m");
  encoder("enc_c");
  mlp("dec_aux", arch.latent_width, arch.decoder_hidden, 3 * arch.complete_size);
  if (with_discriminators) {
    mlp("disc_z", arch.latent_width, arch.disc_latent_hidden, 1);
    layer("disc_c.pp1", 3, arch.disc_cloud_hidden);
    layer("disc_c.pp2", arch.disc_cloud_hidden, arch.disc_cloud_feat);
    layer("disc_c.h1", arch.disc_cloud_feat, arch.disc_cloud_head);
    layer("disc_c.h2", arch.disc_cloud_head, 1);
  }
}

inline void init_network_params(ParamStore& store, const ModelArchitecture& arch,
                                std::uint64_t seed, bool no_share,
                                bool with_discriminators) {
  for_each_network_layer(arch, no_share, with_discriminators,
                         [&](const std::string& name, int in, int out) {
                           detail::init_linear(store, name, in, out, seed);
                         });
}

/// Check that a loaded parameter store carries the layers this architecture
/// expects, with matching shapes.
inline void validate_architecture(const ParamStore& store,
                                  const ModelArchitecture& arch, bool no_share,
                                  bool with_discriminators) {
  for_each_network_layer(
      arch, no_share, with_discriminators,
      [&](const std::string& name, int in, int out) {
        if (!store.contains(name + ".w") || !store.contains(name + ".b"))
          throw std::invalid_argument("missing parameter '" + name + "'");
        const Param& w = store.at(name + ".w");
        if (w.rows() != static_cast<std::size_t>(in) ||
            w.cols() != static_cast<std::size_t>(out))
          throw std::invalid_argument(
              "parameter '" + name + ".w' is (" + std::to_string(w.rows()) + "x" +
              std::to_string(w.cols()) + "), architecture wants (" +
              std::to_string(in) + "x" + std::to_string(out) + ")");
      });
}

/// True for names the discriminator step owns.
inline bool is_discriminator_param(const std::string& name) {
  return name.rfind("disc_z.", 0) == 0 || name.rfind("disc_c.", 0) == 0;
}

/// E_p: partial clouds (both p_x and p_y) -> 1 x latent.
inline NodeId encode_partial(Graph& g, ParamStore& store, const ModelArchitecture& arch,
                             NodeId cloud, Branch branch = Branch::Shared) {
  detail::require_cloud_shape(g, cloud, arch.partial_size, "encode_partial");
  return detail::encoder_forward(g, store, std::string(branch_prefix(branch)) + "enc_p",
                                 cloud);
}

/// E_c: complete clouds -> 1 x latent.
inline NodeId encode_complete(Graph& g, ParamStore& store, const ModelArchitecture& arch,
                              NodeId cloud) {
  detail::require_cloud_shape(g, cloud, arch.complete_size, "encode_complete");
  return detail::encoder_forward(g, store, "enc_c", cloud);
}

/// E_m: mask clouds -> 1 x latent. Same architecture as E_p, own parameters.
inline NodeId encode_mask(Graph& g, ParamStore& store, const ModelArchitecture& arch,
                          NodeId cloud) {
  detail::require_cloud_shape(g, cloud, arch.partial_size, "encode_mask");
  return detail::encoder_forward(g, store, "enc_m", cloud);
}

/// Latent Shape Fusion Module. Lifts both latents to the fusion width, runs
/// the partial feature through a residual chain, fuses it with the mask
/// feature twice (each concatenation is projected back to the fusion width
/// before the elementwise addition), and projects back to the latent width.
/// Row-batched: inputs are B x latent.
inline NodeId lsfm(Graph& g, ParamStore& store, const ModelArchitecture& arch,
                   NodeId z_partial, NodeId z_mask, Branch branch = Branch::Shared) {
  if (g.cols(z_partial) != arch.latent_width || g.cols(z_mask) != arch.latent_width ||
      g.rows(z_partial) != g.rows(z_mask))
    throw std::invalid_argument(
        "lsfm: latent shapes (" + std::to_string(g.rows(z_partial)) + "x" +
        std::to_string(g.cols(z_partial)) + ") and (" + std::to_string(g.rows(z_mask)) +
        "x" + std::to_string(g.cols(z_mask)) + ") do not match width " +
        std::to_string(arch.latent_width));
  const std::string p = std::string(branch_prefix(branch)) + "lsfm";
  auto res_block = [&](const std::string& name, NodeId x) {
    return g.add(x, detail::linear_relu(g, store, name, x));
  };
  NodeId hp = detail::linear(g, store, p + ".lift_p", z_partial);
  NodeId hm = detail::linear(g, store, p + ".lift_m", z_mask);
  for (int i = 1; i <= arch.lsfm_blocks; ++i)
    hp = res_block(p + ".res" + std::to_string(i), hp);
  // Fusion 1: R(hp (+) hm) + hm
  NodeId f1 = detail::linear(g, store, p + ".proj1", g.concat_cols(hp, hm));
  f1 = g.add(res_block(p + ".fuse_res", f1), hm);
  // Fusion 2: (f1 (+) hp) + hp
  NodeId f2 = detail::linear(g, store, p + ".proj2", g.concat_cols(f1, hp));
  f2 = g.add(f2, hp);
  return detail::linear(g, store, p + ".out", f2);
}

/// Five-layer MLP decoder, B x latent -> B x (3 * complete_size). Hidden
/// layers are rectified, the output layer is linear. The main head is the
/// shared D_c; the aux head D_c^r has the same shape with its own parameters.
inline NodeId decode_flat(Graph& g, ParamStore& store, const ModelArchitecture& arch,
                          NodeId z, DecoderHead head, Branch branch = Branch::Shared) {
  if (g.cols(z) != arch.latent_width)
    throw std::invalid_argument("decode: expected latent width " +
                                std::to_string(arch.latent_width) + ", got (" +
                                std::to_string(g.rows(z)) + "x" +
                                std::to_string(g.cols(z)) + ")");
  std::string p = head == DecoderHead::Main
                      ? std::string(branch_prefix(branch)) + "dec_main"
                      : "dec_aux";
  NodeId h = z;
  std::size_t layers = arch.decoder_hidden.size() + 1;
  for (std::size_t i = 1; i <= layers; ++i) {
    std::string name = p + ".l" + std::to_string(i);
    h = i < layers ? detail::linear_relu(g, store, name, h)
                   : detail::linear(g, store, name, h);
  }
  return h;
}

/// Decoder for a single latent, reshaped to a complete_size x 3 cloud node.
inline NodeId decode(Graph& g, ParamStore& store, const ModelArchitecture& arch,
                     NodeId z, DecoderHead head, Branch branch = Branch::Shared) {
  NodeId flat = decode_flat(g, store, arch, z, head, branch);
  if (g.rows(flat) != 1)
    throw std::invalid_argument("decode: single-latent form expects one row");
  return g.reshape(flat, arch.complete_size, 3);
}

/// Latent discriminator: B x latent -> B x 1 raw scores.
inline NodeId discriminate_latent(Graph& g, ParamStore& store,
                                  const ModelArchitecture& arch, NodeId z) {
  if (g.cols(z) != arch.latent_width)
    throw std::invalid_argument("discriminate_latent: expected width " +
                                std::to_string(arch.latent_width) + ", got (" +
                                std::to_string(g.rows(z)) + "x" +
                                std::to_string(g.cols(z)) + ")");
  NodeId h = z;
  std::size_t layers = arch.disc_latent_hidden.size() + 1;
  for (std::size_t i = 1; i <= layers; ++i) {
    h = detail::linear(g, store, "disc_z.l" + std::to_string(i), h);
    if (i < layers) h = g.leaky_relu(h, 0.2);
  }
  return h;
}

/// Cloud discriminator: per-point layers, max-pool, scalar head. N x 3 -> 1 x 1.
inline NodeId discriminate_cloud(Graph& g, ParamStore& store,
                                 const ModelArchitecture& arch, NodeId cloud) {
  if (g.cols(cloud) != 3)
    throw std::invalid_argument("discriminate_cloud: expected (Nx3) cloud, got (" +
                                std::to_string(g.rows(cloud)) + "x" +
                                std::to_string(g.cols(cloud)) + ")");
  NodeId h = g.leaky_relu(detail::linear(g, store, "disc_c.pp1", cloud), 0.2);
  h = g.leaky_relu(detail::linear(g, store, "disc_c.pp2", h), 0.2);
  h = g.max_rows(h);
  h = g.leaky_relu(detail::linear(g, store, "disc_c.h1", h), 0.2);
  return detail::linear(g, store, "disc_c.h2", h);
}

/// The full completion map: decode(lsfm(E_p(p_x), z_mask)). Returns a
/// complete_size x 3 cloud node.
inline NodeId complete_forward(Graph& g, ParamStore& store,
                               const ModelArchitecture& arch, NodeId p_x,
                               NodeId z_mask, Branch branch = Branch::Shared) {
  NodeId z = encode_partial(g, store, arch, p_x, branch);
  NodeId zc = lsfm(g, store, arch, z, z_mask, branch);
  return decode(g, store, arch, zc, DecoderHead::Main, branch);
}

}  // namespace refcomp
