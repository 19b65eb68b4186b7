#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "refcomp/geometry.hpp"
#include "refcomp/metrics.hpp"
#include "refcomp/rng.hpp"

namespace refcomp {

/// Template-guided degradation output. `selected_indices` is the exact KNN
/// union; `complement_indices` the remaining indices of the complete cloud.
/// `partial`/`mask` are the (optionally resampled) point sets.
struct DegradationResult {
  PointCloud partial;
  PointCloud mask;
  std::vector<int> selected_indices;
  std::vector<int> complement_indices;
};

namespace detail {

/// Union of the k nearest complete-cloud indices over all template points,
/// sorted ascending. Operates on a flat xyz array so graph-produced clouds
/// can be degraded without copying into a PointCloud.
inline std::vector<int> knn_union(const PointCloud& tmpl, const double* pts,
                                  int n, int k) {
  if (k < 1 || k > n)
    throw std::invalid_argument("degrade: k=" + std::to_string(k) +
                                " out of range [1, " + std::to_string(n) + "]");
  std::vector<char> hit(static_cast<std::size_t>(n), 0);
  std::vector<double> best_d(static_cast<std::size_t>(k));
  std::vector<int> best_i(static_cast<std::size_t>(k));
  for (const Point3& q : tmpl.points) {
    int filled = 0;
    for (int j = 0; j < n; ++j) {
      double dx = q.x - pts[3 * j], dy = q.y - pts[3 * j + 1], dz = q.z - pts[3 * j + 2];
      double d = dx * dx + dy * dy + dz * dz;
      if (filled == k && d >= best_d[static_cast<std::size_t>(filled - 1)]) continue;
      int at = filled < k ? filled : k - 1;
      while (at > 0 && best_d[static_cast<std::size_t>(at - 1)] > d) {
        best_d[static_cast<std::size_t>(at)] = best_d[static_cast<std::size_t>(at - 1)];
        best_i[static_cast<std::size_t>(at)] = best_i[static_cast<std::size_t>(at - 1)];
        --at;
      }
      best_d[static_cast<std::size_t>(at)] = d;
      best_i[static_cast<std::size_t>(at)] = j;
      if (filled < k) ++filled;
    }
    for (int t = 0; t < filled; ++t) hit[static_cast<std::size_t>(best_i[static_cast<std::size_t>(t)])] = 1;
  }
  std::vector<int> out;
  for (int j = 0; j < n; ++j)
    if (hit[static_cast<std::size_t>(j)]) out.push_back(j);
  return out;
}

}  // namespace detail

inline std::vector<int> degradation_union_indices(const PointCloud& tmpl,
                                                  const PointCloud& complete,
                                                  int k) {
  require_non_empty(tmpl, "degrade");
  require_non_empty(complete, "degrade");
  return detail::knn_union(tmpl, &complete.points[0].x,
                           static_cast<int>(complete.size()), k);
}

/// Degradation indices for a flat xyz buffer, resampled to out_size.
/// Used during training where the completed cloud lives in the graph.
inline std::vector<int> degradation_sample_indices(const PointCloud& tmpl,
                                                   const double* pts, int n, int k,
                                                   int out_size, std::uint64_t seed) {
  std::vector<int> selected = detail::knn_union(tmpl, pts, n, k);
  Rng rng(mix_seed(seed, 0xde64adeULL));
  return sample_indices(selected, out_size, rng);
}

/// Corrupt `complete` by keeping, for each template point, its k nearest
/// neighbours. The partial is the KNN union resampled to out_size; the mask
/// is the complement resampled/padded to mask_size. Passing 0 for either
/// size keeps the raw index set. Deterministic given the seed.
inline DegradationResult degrade(const PointCloud& tmpl, const PointCloud& complete,
                                 int k, int out_size, int mask_size,
                                 std::uint64_t seed) {
  DegradationResult res;
  res.selected_indices = degradation_union_indices(tmpl, complete, k);
  const int n = static_cast<int>(complete.size());
  res.complement_indices.reserve(static_cast<std::size_t>(n) -
                                 res.selected_indices.size());
  {
    std::size_t s = 0;
    for (int j = 0; j < n; ++j) {
      if (s < res.selected_indices.size() && res.selected_indices[s] == j)
        ++s;
      else
        res.complement_indices.push_back(j);
    }
  }
  if (res.complement_indices.empty())
    throw std::runtime_error(
        "degrade: degenerate mask (template covers the whole cloud)");
  Rng rng(mix_seed(seed, 0xde64adeULL));
  std::vector<int> partial_idx =
      out_size > 0 ? sample_indices(res.selected_indices, out_size, rng)
                   : res.selected_indices;
  std::vector<int> mask_idx =
      mask_size > 0 ? sample_indices(res.complement_indices, mask_size, rng)
                    : res.complement_indices;
  res.partial = gather_points(complete, partial_idx);
  res.mask = gather_points(complete, mask_idx);
  return res;
}

enum class ClassScope { SameClass, AllClasses };

/// One retrieved reference: a corpus cloud with its template-guided
/// degradation and mask, plus the selection score.
struct ReferencePair {
  PointCloud partial;   // degraded corpus cloud
  PointCloud complete;  // corpus cloud
  PointCloud mask;      // complement of the degradation
  double cd_to_template = 0.0;
  std::string source_id;
};

struct InsufficientReferencesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Degrade every corpus cloud with the target as template, score by Chamfer
/// distance to the target, drop near-duplicates (cd < min_cd), and return the
/// top_n lowest-CD pairs ascending (ties by source_id).
inline std::vector<ReferencePair> build_reference_pairs(
    const PointCloud& target, const std::vector<PointCloud>& corpus, int k,
    int top_n, double min_cd, ClassScope scope, int partial_size, int mask_size,
    std::uint64_t seed) {
  require_non_empty(target, "build_reference_pairs");
  if (top_n < 1)
    throw std::invalid_argument("build_reference_pairs: top_n must be positive");
  std::vector<ReferencePair> survivors;
  for (std::size_t ci = 0; ci < corpus.size(); ++ci) {
    const PointCloud& c = corpus[ci];
    if (scope == ClassScope::SameClass && c.class_label != target.class_label)
      continue;
    DegradationResult deg =
        degrade(target, c, k, partial_size, mask_size,
                mix_seed(seed, hash_name(c.source_id), ci));
    double cd = chamfer(target, deg.partial);
    if (cd < min_cd) continue;
    ReferencePair pair;
    pair.partial = std::move(deg.partial);
    pair.complete = c;
    pair.mask = std::move(deg.mask);
    pair.cd_to_template = cd;
    pair.source_id = c.source_id;
    survivors.push_back(std::move(pair));
  }
  std::sort(survivors.begin(), survivors.end(),
            [](const ReferencePair& a, const ReferencePair& b) {
              if (a.cd_to_template != b.cd_to_template)
                return a.cd_to_template < b.cd_to_template;
              return a.source_id < b.source_id;
            });
  if (static_cast<int>(survivors.size()) < top_n) {
    std::string msg = "build_reference_pairs: only " +
                      std::to_string(survivors.size()) + " of " +
                      std::to_string(top_n) + " references available for '" +
                      target.source_id + "' (survivors:";
    for (const auto& s : survivors) msg += " " + s.source_id;
    msg += ")";
    throw InsufficientReferencesError(msg);
  }
  survivors.resize(static_cast<std::size_t>(top_n));
  return survivors;
}

/// Uniform pick among the retrieved pairs; at test time callers pass a
/// single-element list holding the closest pair.
inline const ReferencePair& select_training_pair(
    const std::vector<ReferencePair>& pairs, Rng& rng) {
  if (pairs.empty())
    throw std::invalid_argument("select_training_pair: empty pair list");
  return pairs[rng.below(pairs.size())];
}

}  // namespace refcomp
