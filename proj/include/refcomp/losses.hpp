#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "refcomp/assignment.hpp"
#include "refcomp/autodiff.hpp"
#include "refcomp/geometry.hpp"

namespace refcomp {

struct LossWeights {
  double alpha = 0.35;
  double beta = 0.65;
  double gamma = 0.001;
  double lambda_adv = 0.1;
};

/// Raw per-term values of one training step. `total` always equals
/// alpha*(cd_ref + cd_aux_ref) + beta*(cd_tar + cd_aux_tar) + gamma*wasserstein
/// (+ lambda_adv*adv_gen in adversarial modes), recombinable from the parts.
struct LossBreakdown {
  double cd_ref = 0.0;      // reconstruction of c_y from the reference branch
  double cd_aux_ref = 0.0;  // aux decoder head on the reference branch
  double cd_tar = 0.0;      // degraded completion vs the target partial
  double cd_aux_tar = 0.0;  // direct decode of z_{p_x} vs the target partial
  double wasserstein = 0.0;
  double adv_gen = 0.0;
  double adv_disc = 0.0;
  double total = 0.0;
};

namespace detail {

/// First index attaining the minimum squared distance from (px,py,pz) to the
/// flat xyz array. Two branchless passes: find the minimum, then its first
/// occurrence (the distance recomputes bitwise identically, so the earliest
/// index always wins ties).
inline int nn_first_argmin(double px, double py, double pz,
                           const double* __restrict pts, int m) {
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) {
    double dx = px - pts[3 * j], dy = py - pts[3 * j + 1], dz = pz - pts[3 * j + 2];
    double d = dx * dx + dy * dy + dz * dz;
    best = d < best ? d : best;
  }
  for (int j = 0; j < m; ++j) {
    double dx = px - pts[3 * j], dy = py - pts[3 * j + 1], dz = pz - pts[3 * j + 2];
    if (dx * dx + dy * dy + dz * dz == best) return j;
  }
  return 0;  // unreachable for finite inputs
}

/// Nearest-neighbour indices from each row of `pts` (n x 3 values) into cloud.
inline std::vector<int> nn_indices_rows(const std::vector<double>& pts, int n,
                                        const PointCloud& cloud) {
  std::vector<int> out(static_cast<std::size_t>(n));
  const double* cl = &cloud.points[0].x;
  const int m = static_cast<int>(cloud.size());
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        nn_first_argmin(pts[3 * static_cast<std::size_t>(i)],
                        pts[3 * static_cast<std::size_t>(i) + 1],
                        pts[3 * static_cast<std::size_t>(i) + 2], cl, m);
  return out;
}

/// Nearest row of `pts` for each point of cloud.
inline std::vector<int> nn_indices_cloud(const PointCloud& cloud,
                                         const std::vector<double>& pts, int n) {
  std::vector<int> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& q = cloud.points[i];
    out[i] = nn_first_argmin(q.x, q.y, q.z, pts.data(), n);
  }
  return out;
}

}  // namespace detail

/// Differentiable Chamfer distance between a predicted cloud node (n x 3) and
/// a fixed target cloud. The nearest-neighbour pairing is recomputed from the
/// current values and treated as constant during backward; gradients flow
/// only through the matched coordinate differences.
inline NodeId cd_loss(Graph& g, NodeId pred, const PointCloud& target) {
  require_non_empty(target, "cd_loss");
  if (g.cols(pred) != 3 || g.rows(pred) < 1)
    throw std::invalid_argument("cd_loss: pred node must be n x 3, got (" +
                                std::to_string(g.rows(pred)) + "x" +
                                std::to_string(g.cols(pred)) + ")");
  const int n = g.rows(pred);
  // Values are copied: growing the graph below may reallocate node storage.
  const std::vector<double> vals = g.value(pred);
  // pred -> target: gather the matched target points as a constant.
  std::vector<int> fwd = detail::nn_indices_rows(vals, n, target);
  PointCloud matched = gather_points(target, fwd);
  NodeId diff_f = g.sub(pred, g.constant(matched));
  NodeId term_f = g.scale(g.sum_all(g.square(diff_f)), 1.0 / static_cast<double>(n));
  // target -> pred: gather the matched pred rows (gradients scatter back).
  std::vector<int> rev = detail::nn_indices_cloud(target, vals, n);
  NodeId sel = g.gather_rows(pred, rev);
  NodeId diff_b = g.sub(sel, g.constant(target));
  NodeId term_b =
      g.scale(g.sum_all(g.square(diff_b)), 1.0 / static_cast<double>(target.size()));
  return g.add(term_f, term_b);
}

/// Exact 1-Wasserstein distance between two equal-size batches of features
/// (B x d each) under L2 ground cost. Uniform empirical weights make the
/// Kantorovich optimum a perfect matching, solved exactly; the matching is
/// held constant during backward while the matched distances stay
/// differentiable on both sides.
inline NodeId wasserstein_loss(Graph& g, NodeId fake, NodeId real) {
  const int b = g.rows(fake);
  const int d = g.cols(fake);
  if (g.rows(real) != b || g.cols(real) != d)
    throw std::invalid_argument("wasserstein_loss: batch shapes differ, (" +
                                std::to_string(b) + "x" + std::to_string(d) +
                                ") vs (" + std::to_string(g.rows(real)) + "x" +
                                std::to_string(g.cols(real)) + ")");
  const auto& fv = g.value(fake);
  const auto& rv = g.value(real);
  std::vector<double> cost(static_cast<std::size_t>(b) * b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        double diff = fv[static_cast<std::size_t>(i) * d + k] -
                      rv[static_cast<std::size_t>(j) * d + k];
        acc += diff * diff;
      }
      if (!std::isfinite(acc))
        throw std::invalid_argument("wasserstein_loss: non-finite feature distance");
      cost[static_cast<std::size_t>(i) * b + j] = std::sqrt(acc);
    }
  AssignmentResult plan = solve_assignment(cost, b);
  NodeId matched = g.gather_rows(real, plan.row_to_col);
  NodeId diff = g.sub(fake, matched);
  NodeId dist = g.sqrt_elem(g.row_sums(g.square(diff)));  // B x 1 of L2 norms
  return g.mean_all(dist);
}

/// Least-squares adversarial objectives on raw scores.
/// disc = 0.5*mean((s_real-1)^2) + 0.5*mean(s_fake^2); gen = 0.5*mean((s_fake-1)^2).
inline std::pair<NodeId, NodeId> adversarial_losses(Graph& g, NodeId scores_real,
                                                    NodeId scores_fake) {
  if (g.rows(scores_real) < 1 || g.rows(scores_fake) < 1)
    throw std::invalid_argument("adversarial_losses: empty score batch");
  NodeId ones_r = g.constant_fill(g.rows(scores_real), g.cols(scores_real), 1.0);
  NodeId ones_f = g.constant_fill(g.rows(scores_fake), g.cols(scores_fake), 1.0);
  NodeId disc = g.add(g.scale(g.mean_all(g.square(g.sub(scores_real, ones_r))), 0.5),
                      g.scale(g.mean_all(g.square(scores_fake)), 0.5));
  NodeId gen = g.scale(g.mean_all(g.square(g.sub(scores_fake, ones_f))), 0.5);
  return {gen, disc};
}

/// The weighted overall objective. Pass -1 for adv_gen outside adversarial
/// modes. Each group is scaled by its weight as a node, so a zero weight
/// yields exactly zero gradient into that group.
inline NodeId total_loss(Graph& g, NodeId cd_ref, NodeId cd_aux_ref, NodeId cd_tar,
                         NodeId cd_aux_tar, NodeId wasserstein, NodeId adv_gen,
                         const LossWeights& w) {
  NodeId total = g.add(g.scale(g.add(cd_ref, cd_aux_ref), w.alpha),
                       g.scale(g.add(cd_tar, cd_aux_tar), w.beta));
  total = g.add(total, g.scale(wasserstein, w.gamma));
  if (adv_gen >= 0) total = g.add(total, g.scale(adv_gen, w.lambda_adv));
  return total;
}

/// Recombine a breakdown the same way total_loss does; used to verify logs.
inline double recombine_total(const LossBreakdown& p, const LossWeights& w,
                              bool adversarial) {
  double t = w.alpha * (p.cd_ref + p.cd_aux_ref) + w.beta * (p.cd_tar + p.cd_aux_tar);
  t = t + w.gamma * p.wasserstein;
  if (adversarial) t = t + w.lambda_adv * p.adv_gen;
  return t;
}

}  // namespace refcomp
