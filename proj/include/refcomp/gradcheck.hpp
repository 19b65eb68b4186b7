#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "refcomp/autodiff.hpp"
#include "refcomp/param_store.hpp"

namespace refcomp {

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
  };
  std::vector<Entry> per_param;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Compare analytic gradients against central finite differences for every
/// entry of the store. The builder must be a deterministic function of the
/// parameter values; it is re-invoked for every probe.
inline GradCheckReport grad_check(
    ParamStore& store,
    const std::function<NodeId(Graph&, ParamStore&)>& builder, double tolerance,
    double h = 1e-5) {
  auto eval = [&]() {
    Graph g;
    NodeId loss = builder(g, store);
    double v = g.scalar(loss);
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss");
    return v;
  };
  // Analytic pass.
  store.zero_grads();
  {
    Graph g;
    NodeId loss = builder(g, store);
    if (!std::isfinite(g.scalar(loss)))
      throw std::runtime_error("grad_check: non-finite loss");
    g.backward(loss);
  }
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, p] : store) analytic[name] = p.grad;
  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& [name, p] : store) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double saved = p.value[i];
      p.value[i] = saved + h;
      double up = eval();
      p.value[i] = saved - h;
      double down = eval();
      p.value[i] = saved;
      double fd = (up - down) / (2.0 * h);
      double an = analytic[name][i];
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
    report.per_param.push_back({name, worst});
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace refcomp
