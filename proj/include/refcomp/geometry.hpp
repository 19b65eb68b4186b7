#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "refcomp/rng.hpp"

namespace refcomp {

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Point3() = default;
  Point3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }

  double sq_norm() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(sq_norm()); }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  bool operator==(const Point3& o) const {
    return x == o.x && y == o.y && z == o.z;
  }
};

inline double sq_dist(const Point3& a, const Point3& b) {
  double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

/// Ordered point container. Index order is significant: degradation masks
/// and resampling reference points by index.
struct PointCloud {
  std::vector<Point3> points;
  std::string class_label;  // empty = unlabeled
  std::string source_id;    // empty = anonymous

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts) : points(std::move(pts)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Point3& operator[](std::size_t i) const { return points[i]; }
  Point3& operator[](std::size_t i) { return points[i]; }
};

inline void require_non_empty(const PointCloud& c, const char* what) {
  if (c.empty())
    throw std::invalid_argument(std::string(what) + ": point cloud is empty");
}

/// K nearest neighbours of a query point. `distances` are squared L2,
/// ascending; ties broken by the smaller index.
struct NeighborList {
  std::vector<int> indices;
  std::vector<double> distances;
};

/// Exact brute-force KNN. 1 <= k <= |target| or invalid_argument.
inline NeighborList knn(const Point3& query, const PointCloud& target, int k) {
  const int n = static_cast<int>(target.size());
  if (k < 1 || k > n)
    throw std::invalid_argument("knn: k=" + std::to_string(k) +
                                " out of range [1, " + std::to_string(n) + "]");
  // Insertion into a sorted best-list; cheap for the small k used here.
  std::vector<std::pair<double, int>> best;
  best.reserve(static_cast<std::size_t>(k) + 1);
  for (int i = 0; i < n; ++i) {
    double d = sq_dist(query, target.points[static_cast<std::size_t>(i)]);
    std::pair<double, int> cand{d, i};
    if (static_cast<int>(best.size()) == k && !(cand < best.back())) continue;
    auto pos = std::upper_bound(best.begin(), best.end(), cand);
    best.insert(pos, cand);
    if (static_cast<int>(best.size()) > k) best.pop_back();
  }
  NeighborList out;
  out.indices.reserve(best.size());
  out.distances.reserve(best.size());
  for (const auto& [d, i] : best) {
    out.indices.push_back(i);
    out.distances.push_back(d);
  }
  return out;
}

/// Squared distance to the nearest target point (branchless scan).
inline double nn_sq_dist(const Point3& query, const PointCloud& target) {
  require_non_empty(target, "nn_sq_dist");
  double best = std::numeric_limits<double>::infinity();
  for (const Point3& p : target.points) {
    double dx = query.x - p.x, dy = query.y - p.y, dz = query.z - p.z;
    double d = dx * dx + dy * dy + dz * dz;
    best = d < best ? d : best;
  }
  return best;
}

/// Index of the nearest target point; ties resolve to the smaller index.
inline int nn_index(const Point3& query, const PointCloud& target) {
  require_non_empty(target, "nn_index");
  double best = std::numeric_limits<double>::infinity();
  int best_i = 0;
  const int n = static_cast<int>(target.size());
  for (int i = 0; i < n; ++i) {
    double d = sq_dist(query, target.points[static_cast<std::size_t>(i)]);
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  return best_i;
}

struct NormalizeResult {
  PointCloud cloud;
  Point3 centroid;
  double scale = 1.0;
};

/// Center at the origin and scale so the farthest point sits on the unit
/// sphere. A degenerate cloud (single repeated point) keeps scale = 1.
inline NormalizeResult normalize_unit_sphere(const PointCloud& cloud) {
  require_non_empty(cloud, "normalize_unit_sphere");
  Point3 c{0, 0, 0};
  for (const Point3& p : cloud.points) c = c + p;
  double inv_n = 1.0 / static_cast<double>(cloud.size());
  c = c * inv_n;
  double max_sq = 0.0;
  for (const Point3& p : cloud.points) max_sq = std::max(max_sq, sq_dist(p, c));
  double scale = std::sqrt(max_sq);
  if (scale == 0.0) scale = 1.0;
  NormalizeResult out;
  out.cloud.points.reserve(cloud.size());
  double inv_s = 1.0 / scale;
  for (const Point3& p : cloud.points) out.cloud.points.push_back((p - c) * inv_s);
  out.cloud.class_label = cloud.class_label;
  out.cloud.source_id = cloud.source_id;
  out.centroid = c;
  out.scale = scale;
  return out;
}

inline PointCloud denormalize(const PointCloud& cloud, const Point3& centroid,
                              double scale) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Point3& p : cloud.points) out.points.push_back(p * scale + centroid);
  out.class_label = cloud.class_label;
  out.source_id = cloud.source_id;
  return out;
}

enum class SampleStrategy { Random, FarthestPoint };

/// Draw m indices from pool. m == |pool| keeps the pool unchanged;
/// m < |pool| samples without replacement; m > |pool| samples with
/// replacement. Output indices are sorted ascending.
inline std::vector<int> sample_indices(const std::vector<int>& pool, int m, Rng& rng) {
  const int n = static_cast<int>(pool.size());
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(m));
  if (m == n) return pool;
  if (m < n) {
    std::vector<int> idx(pool);
    for (int i = 0; i < m; ++i) {
      std::size_t j = i + rng.below(static_cast<std::size_t>(n - i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    out.assign(idx.begin(), idx.begin() + m);
  } else {
    for (int i = 0; i < m; ++i)
      out.push_back(pool[rng.below(static_cast<std::size_t>(n))]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline PointCloud gather_points(const PointCloud& cloud, const std::vector<int>& idx) {
  PointCloud out;
  out.points.reserve(idx.size());
  for (int i : idx) out.points.push_back(cloud.points[static_cast<std::size_t>(i)]);
  out.class_label = cloud.class_label;
  out.source_id = cloud.source_id;
  return out;
}

/// Greedy farthest-point indices, starting at index 0. First-index tie break.
inline std::vector<int> farthest_point_indices(const PointCloud& cloud, int m) {
  const int n = static_cast<int>(cloud.size());
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(m));
  picked.push_back(0);
  std::vector<double> min_d(static_cast<std::size_t>(n),
                            std::numeric_limits<double>::infinity());
  for (int step = 1; step < m; ++step) {
    const Point3& last = cloud.points[static_cast<std::size_t>(picked.back())];
    int best_i = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      double d = std::min(min_d[static_cast<std::size_t>(i)],
                          sq_dist(cloud.points[static_cast<std::size_t>(i)], last));
      min_d[static_cast<std::size_t>(i)] = d;
      if (d > best) {
        best = d;
        best_i = i;
      }
    }
    picked.push_back(best_i);
  }
  return picked;
}

/// Resample to exactly m points. Deterministic given the seed.
inline PointCloud resample(const PointCloud& cloud, int m, SampleStrategy strategy,
                           std::uint64_t seed) {
  require_non_empty(cloud, "resample");
  if (m < 1) throw std::invalid_argument("resample: m must be positive");
  const int n = static_cast<int>(cloud.size());
  if (strategy == SampleStrategy::FarthestPoint) {
    if (m > n)
      throw std::invalid_argument(
          "resample: farthest-point cannot upsample (m=" + std::to_string(m) +
          " > " + std::to_string(n) + ")");
    return gather_points(cloud, farthest_point_indices(cloud, m));
  }
  Rng rng(mix_seed(seed, 0x7e5a3a11u));
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  return gather_points(cloud, sample_indices(pool, m, rng));
}

}  // namespace refcomp
