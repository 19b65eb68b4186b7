#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "refcomp/degradation.hpp"
#include "refcomp/losses.hpp"
#include "refcomp/manifest.hpp"
#include "refcomp/network.hpp"
#include "refcomp/param_store.hpp"

namespace refcomp {

enum class TrainMode { Plain, Wdis, Unified };

inline const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::Plain: return "plain";
    case TrainMode::Wdis: return "wdis";
    default: return "unified";
  }
}

inline TrainMode parse_mode(const std::string& s) {
  if (s == "plain") return TrainMode::Plain;
  if (s == "wdis") return TrainMode::Wdis;
  if (s == "unified") return TrainMode::Unified;
  throw std::invalid_argument("unknown mode '" + s + "' (plain|wdis|unified)");
}

/// Every tunable of the pipeline. Field defaults are the full-scale values;
/// desk_preset() holds the small configuration used for quick local runs.
struct TrainConfig {
  TrainMode mode = TrainMode::Plain;
  int epochs = 600;      // desk preset: 30
  int batch_size = 50;   // desk preset: 8
  int max_steps = 0;     // 0 = run all epochs; otherwise stop after this many steps
  OptimizerConfig optimizer;  // lr 5e-4, decoupled wd 5e-4, betas 0.9/0.999, eps 1e-8
  LossWeights weights;        // alpha 0.35, beta 0.65, gamma 0.001, lambda_adv 0.1
  int top_n_refs = 3;
  int degrade_k_ref = 15;   // degradation k when building reference pairs
  int degrade_k_train = 5;  // degradation k for Deg(c_x_hat) inside the step
  double min_cd = 1.0e-4;
  std::optional<ClassScope> class_scope_override;  // unset = per-mode default
  std::uint64_t seed = 0;
  bool fixed_ref = false;
  bool only_gan = false;
  bool no_share = false;
  ModelArchitecture arch;  // includes partial_size 1024 / complete_size 2048

  bool adversarial() const { return mode != TrainMode::Plain; }

  /// Same-class retrieval for class-aware modes, all-classes for unified.
  ClassScope class_scope() const {
    if (class_scope_override) return *class_scope_override;
    return mode == TrainMode::Unified ? ClassScope::AllClasses : ClassScope::SameClass;
  }

  static TrainConfig paper_defaults() { return TrainConfig{}; }

  static TrainConfig desk_preset() {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.arch.enc_hidden = 32;
    cfg.arch.decoder_hidden = {256, 256, 384, 512};
    return cfg;
  }

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("config: epochs must be positive");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be positive");
    if (optimizer.learning_rate <= 0.0)
      throw std::invalid_argument("config: learning_rate must be positive");
    if (optimizer.weight_decay < 0.0)
      throw std::invalid_argument("config: weight_decay must be non-negative");
    if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0 ||
        weights.lambda_adv < 0)
      throw std::invalid_argument("config: loss weights must be non-negative");
    if (only_gan && mode == TrainMode::Plain)
      throw std::invalid_argument("config: only_gan requires an adversarial mode");
    if (top_n_refs < 1) throw std::invalid_argument("config: top_n_refs must be positive");
    if (arch.partial_size < 1 || arch.complete_size < 1)
      throw std::invalid_argument("config: cloud sizes must be positive");
  }
};

namespace detail {

inline std::string ints_csv(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<int> parse_ints_csv(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + s + "'");
}

}  // namespace detail

/// Canonical `key = value` text. serialize -> parse is the identity.
inline std::string serialize_config(const TrainConfig& cfg) {
  std::string s;
  auto put = [&](const std::string& k, const std::string& v) {
    s += k + " = " + v + "\n";
  };
  put("mode", mode_name(cfg.mode));
  put("epochs", std::to_string(cfg.epochs));
  put("batch_size", std::to_string(cfg.batch_size));
  put("max_steps", std::to_string(cfg.max_steps));
  put("learning_rate", format_real17(cfg.optimizer.learning_rate));
  put("weight_decay", format_real17(cfg.optimizer.weight_decay));
  put("beta1", format_real17(cfg.optimizer.beta1));
  put("beta2", format_real17(cfg.optimizer.beta2));
  put("adam_epsilon", format_real17(cfg.optimizer.epsilon));
  put("alpha", format_real17(cfg.weights.alpha));
  put("beta", format_real17(cfg.weights.beta));
  put("gamma", format_real17(cfg.weights.gamma));
  put("lambda_adv", format_real17(cfg.weights.lambda_adv));
  put("top_n_refs", std::to_string(cfg.top_n_refs));
  put("degrade_k_ref", std::to_string(cfg.degrade_k_ref));
  put("degrade_k_train", std::to_string(cfg.degrade_k_train));
  put("min_cd", format_real17(cfg.min_cd));
  put("class_scope", !cfg.class_scope_override          ? "auto"
                     : *cfg.class_scope_override == ClassScope::SameClass
                         ? "same-class"
                         : "all-classes");
  put("seed", std::to_string(cfg.seed));
  put("fixed_ref", cfg.fixed_ref ? "true" : "false");
  put("only_gan", cfg.only_gan ? "true" : "false");
  put("no_share", cfg.no_share ? "true" : "false");
  put("latent_width", std::to_string(cfg.arch.latent_width));
  put("enc_hidden", std::to_string(cfg.arch.enc_hidden));
  put("lsfm_width", std::to_string(cfg.arch.lsfm_width));
  put("lsfm_blocks", std::to_string(cfg.arch.lsfm_blocks));
  put("decoder_hidden", detail::ints_csv(cfg.arch.decoder_hidden));
  put("partial_size", std::to_string(cfg.arch.partial_size));
  put("complete_size", std::to_string(cfg.arch.complete_size));
  put("disc_latent_hidden", detail::ints_csv(cfg.arch.disc_latent_hidden));
  put("disc_cloud_hidden", std::to_string(cfg.arch.disc_cloud_hidden));
  put("disc_cloud_feat", std::to_string(cfg.arch.disc_cloud_feat));
  put("disc_cloud_head", std::to_string(cfg.arch.disc_cloud_head));
  return s;
}

/// Parse `key = value` lines over a base config. '#' starts a comment.
/// Unknown keys are hard errors.
inline TrainConfig parse_config_text(const std::string& text,
                                     TrainConfig cfg = TrainConfig::paper_defaults()) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t\r");
      std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + stripped + "'");
    std::string key = trim(stripped.substr(0, eq));
    std::string val = trim(stripped.substr(eq + 1));
    bool known = true;
    try {
      if (key == "mode") cfg.mode = parse_mode(val);
      else if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "batch_size") cfg.batch_size = std::stoi(val);
      else if (key == "max_steps") cfg.max_steps = std::stoi(val);
      else if (key == "learning_rate") cfg.optimizer.learning_rate = std::stod(val);
      else if (key == "weight_decay") cfg.optimizer.weight_decay = std::stod(val);
      else if (key == "beta1") cfg.optimizer.beta1 = std::stod(val);
      else if (key == "beta2") cfg.optimizer.beta2 = std::stod(val);
      else if (key == "adam_epsilon") cfg.optimizer.epsilon = std::stod(val);
      else if (key == "alpha") cfg.weights.alpha = std::stod(val);
      else if (key == "beta") cfg.weights.beta = std::stod(val);
      else if (key == "gamma") cfg.weights.gamma = std::stod(val);
      else if (key == "lambda_adv") cfg.weights.lambda_adv = std::stod(val);
      else if (key == "top_n_refs") cfg.top_n_refs = std::stoi(val);
      else if (key == "degrade_k_ref") cfg.degrade_k_ref = std::stoi(val);
      else if (key == "degrade_k_train") cfg.degrade_k_train = std::stoi(val);
      else if (key == "min_cd") cfg.min_cd = std::stod(val);
      else if (key == "class_scope") {
        if (val == "auto") cfg.class_scope_override.reset();
        else if (val == "same-class") cfg.class_scope_override = ClassScope::SameClass;
        else if (val == "all-classes") cfg.class_scope_override = ClassScope::AllClasses;
        else throw std::invalid_argument("expected auto|same-class|all-classes");
      }
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "fixed_ref") cfg.fixed_ref = detail::parse_bool(val);
      else if (key == "only_gan") cfg.only_gan = detail::parse_bool(val);
      else if (key == "no_share") cfg.no_share = detail::parse_bool(val);
      else if (key == "latent_width") cfg.arch.latent_width = std::stoi(val);
      else if (key == "enc_hidden") cfg.arch.enc_hidden = std::stoi(val);
      else if (key == "lsfm_width") cfg.arch.lsfm_width = std::stoi(val);
      else if (key == "lsfm_blocks") cfg.arch.lsfm_blocks = std::stoi(val);
      else if (key == "decoder_hidden") cfg.arch.decoder_hidden = detail::parse_ints_csv(val);
      else if (key == "partial_size") cfg.arch.partial_size = std::stoi(val);
      else if (key == "complete_size") cfg.arch.complete_size = std::stoi(val);
      else if (key == "disc_latent_hidden")
        cfg.arch.disc_latent_hidden = detail::parse_ints_csv(val);
      else if (key == "disc_cloud_hidden") cfg.arch.disc_cloud_hidden = std::stoi(val);
      else if (key == "disc_cloud_feat") cfg.arch.disc_cloud_feat = std::stoi(val);
      else if (key == "disc_cloud_head") cfg.arch.disc_cloud_head = std::stoi(val);
      else known = false;
    } catch (const std::exception& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": bad value '" + val + "' for key '" + key +
                                  "' (" + e.what() + ")");
    }
    if (!known)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": unknown config key '" + key + "'");
  }
  return cfg;
}

inline TrainConfig load_config_file(const std::string& path,
                                    TrainConfig base = TrainConfig::paper_defaults()) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), base);
}

}  // namespace refcomp
