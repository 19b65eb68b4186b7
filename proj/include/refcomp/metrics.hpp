#pragma once

#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "refcomp/geometry.hpp"

namespace refcomp {

/// One evaluated metric. `scale_factor` is the table-style display factor
/// (1e4 for CD/UCD, 1e2 for MMD and F1); `value` stays raw.
struct MetricReport {
  std::string name;
  double value = 0.0;
  double scale_factor = 1.0;
  std::vector<std::pair<std::string, double>> per_item;

  double scaled() const { return value * scale_factor; }
};

namespace detail {

/// Sum over points of `a` of the squared distance to the closest point of `b`.
inline double sum_nn_sq(const PointCloud& a, const PointCloud& b) {
  double acc = 0.0;
  for (const Point3& p : a.points) acc += nn_sq_dist(p, b);
  return acc;
}

}  // namespace detail

/// Symmetric Chamfer distance: mean squared nearest-neighbour distance in
/// both directions.
inline double chamfer(const PointCloud& a, const PointCloud& b) {
  require_non_empty(a, "chamfer");
  require_non_empty(b, "chamfer");
  return detail::sum_nn_sq(a, b) / static_cast<double>(a.size()) +
         detail::sum_nn_sq(b, a) / static_cast<double>(b.size());
}

/// Unidirectional Chamfer distance, partial -> completed only. Measures how
/// well the completion covers the input; asymmetric by design.
inline double ucd(const PointCloud& partial, const PointCloud& completed) {
  require_non_empty(partial, "ucd");
  require_non_empty(completed, "ucd");
  return detail::sum_nn_sq(partial, completed) / static_cast<double>(partial.size());
}

struct F1Result {
  double f1 = 0.0;
  double accuracy = 0.0;
  double completeness = 0.0;
};

/// F1 under a strict L2 threshold. Accuracy counts pred points with an
/// unsquared nearest-neighbour distance < epsilon against gt; completeness
/// is the reverse direction; the harmonic mean is 0 when both vanish.
inline F1Result f1_score(const PointCloud& pred, const PointCloud& gt,
                         double epsilon = 0.03) {
  require_non_empty(pred, "f1_score");
  require_non_empty(gt, "f1_score");
  if (epsilon <= 0.0)
    throw std::invalid_argument("f1_score: epsilon must be positive");
  const double eps_sq = epsilon * epsilon;
  auto fraction_within = [eps_sq](const PointCloud& from, const PointCloud& to) {
    std::size_t hits = 0;
    for (const Point3& p : from.points)
      if (nn_sq_dist(p, to) < eps_sq) ++hits;
    return static_cast<double>(hits) / static_cast<double>(from.size());
  };
  F1Result r;
  r.accuracy = fraction_within(pred, gt);
  r.completeness = fraction_within(gt, pred);
  double denom = r.accuracy + r.completeness;
  r.f1 = denom > 0.0 ? 2.0 * r.accuracy * r.completeness / denom : 0.0;
  return r;
}

/// Minimum Matching Distance: for every prediction, the smallest Chamfer
/// distance to any ground-truth cloud, averaged uniformly.
inline double mmd(const std::vector<PointCloud>& preds,
                  const std::vector<PointCloud>& gts) {
  if (preds.empty() || gts.empty())
    throw std::invalid_argument("mmd: both sets must be non-empty");
  double acc = 0.0;
  for (const PointCloud& p : preds) {
    double best = std::numeric_limits<double>::infinity();
    for (const PointCloud& g : gts) best = std::min(best, chamfer(p, g));
    acc += best;
  }
  return acc / static_cast<double>(preds.size());
}

}  // namespace refcomp
