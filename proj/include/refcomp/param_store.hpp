#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace refcomp {

/// One named trainable array with its gradient and AdamW moment state.
struct Param {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> moment1;
  std::vector<double> moment2;
  std::uint64_t steps = 0;

  std::size_t size() const { return value.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

/// Flat name -> array storage. Lookup returns the one shared entry, never a
/// copy; every call site that asks for a name observes the same values. This
/// is the mechanism behind the shared reference/target branches.
class ParamStore {
 public:
  Param& create(const std::string& name, std::vector<std::size_t> shape) {
    if (entries_.count(name))
      throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    Param p;
    p.shape = std::move(shape);
    std::size_t n = 1;
    for (std::size_t d : p.shape) n *= d;
    p.value.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    p.moment1.assign(n, 0.0);
    p.moment2.assign(n, 0.0);
    return entries_.emplace(name, std::move(p)).first->second;
  }

  Param& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  const Param& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  void zero_grads() {
    for (auto& [name, p] : entries_)
      std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, p] : entries_) out.push_back(name);
    return out;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p.size();
    return n;
  }

  // Ordered map: iteration (and therefore optimizer and checkpoint order) is
  // deterministic.
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t count() const { return entries_.size(); }

 private:
  std::map<std::string, Param> entries_;
};

struct OptimizerConfig {
  double learning_rate = 5e-4;
  double weight_decay = 5e-4;  // decoupled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t total_steps = 1;  // cosine horizon
};

/// Cosine factor 0.5*(1+cos(pi*step/total_steps)): 1 at step 0, 0 at the end.
inline double cosine_lr(const OptimizerConfig& cfg, std::uint64_t step) {
  double t = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

/// One decoupled-weight-decay adaptive-moment update over the selected
/// entries. Bias correction uses each entry's own step count.
inline void optimizer_step(ParamStore& store, const OptimizerConfig& cfg,
                           std::uint64_t step,
                           const std::function<bool(const std::string&)>& select) {
  const double lr_t = cosine_lr(cfg, step);
  for (auto& [name, p] : store) {
    if (select && !select(name)) continue;
    p.steps += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.steps));
    for (std::size_t i = 0; i < p.size(); ++i) {
      double g = p.grad[i];
      p.moment1[i] = cfg.beta1 * p.moment1[i] + (1.0 - cfg.beta1) * g;
      p.moment2[i] = cfg.beta2 * p.moment2[i] + (1.0 - cfg.beta2) * g * g;
      double m_hat = p.moment1[i] / bc1;
      double v_hat = p.moment2[i] / bc2;
      p.value[i] -= lr_t * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) +
                            cfg.weight_decay * p.value[i]);
    }
  }
}

inline void optimizer_step(ParamStore& store, const OptimizerConfig& cfg,
                           std::uint64_t step) {
  optimizer_step(store, cfg, step, nullptr);
}

}  // namespace refcomp
