#include "physdyn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace physdyn::metrics {

KdTree::KdTree(const std::vector<Vec3>& points) {
  require(!points.empty(), Errc::InvalidArgument, "KdTree: empty point set");
  std::vector<Vec3> pts = points;
  nodes_.reserve(pts.size());
  root_ = build(pts, 0, static_cast<int>(pts.size()));
}

int KdTree::build(std::vector<Vec3>& pts, int lo, int hi) {
  if (lo >= hi) return -1;
  Vec3 bb_lo = pts[lo], bb_hi = pts[lo];
  for (int i = lo; i < hi; ++i) {
    bb_lo = bb_lo.cwiseMin(pts[i]);
    bb_hi = bb_hi.cwiseMax(pts[i]);
  }
  int axis;
  (bb_hi - bb_lo).maxCoeff(&axis);
  int mid = (lo + hi) / 2;
  std::nth_element(pts.begin() + lo, pts.begin() + mid, pts.begin() + hi,
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  int idx = static_cast<int>(nodes_.size());
  nodes_.push_back({pts[mid], axis, -1, -1});
  int left = build(pts, lo, mid);
  int right = build(pts, mid + 1, hi);
  nodes_[idx].left = left;
  nodes_[idx].right = right;
  return idx;
}

void KdTree::search(int node, const Vec3& q, double& best) const {
  if (node < 0) return;
  const Node& nd = nodes_[node];
  best = std::min(best, (q - nd.point).squaredNorm());
  double delta = q[nd.axis] - nd.point[nd.axis];
  int near = delta < 0.0 ? nd.left : nd.right;
  int far = delta < 0.0 ? nd.right : nd.left;
  search(near, q, best);
  if (delta * delta < best) search(far, q, best);
}

double KdTree::nearest_sq(const Vec3& query) const {
  double best = std::numeric_limits<double>::infinity();
  search(root_, query, best);
  return best;
}

double viou(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, int resolution) {
  require(!pred.empty() && !gt.empty(), Errc::InvalidArgument, "viou: empty cloud");
  require(resolution >= 2, Errc::InvalidArgument, "viou: resolution must be >= 2");

  Vec3 lo = pred[0], hi = pred[0];
  for (const Vec3& p : pred) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  for (const Vec3& p : gt) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec3 center = 0.5 * (lo + hi);
  Vec3 half = (0.5 * (hi - lo) * 1.05).cwiseMax(1e-12);
  lo = center - half;
  Vec3 cell = 2.0 * half / resolution;

  std::size_t count = static_cast<std::size_t>(resolution) * resolution * resolution;
  std::vector<std::uint8_t> occ_a(count, 0), occ_b(count, 0);
  auto mark = [&](const std::vector<Vec3>& pts, std::vector<std::uint8_t>& occ) {
    for (const Vec3& p : pts) {
      std::size_t idx = 0;
      for (int a = 0; a < 3; ++a) {
        int c = std::clamp(static_cast<int>((p[a] - lo[a]) / cell[a]), 0, resolution - 1);
        idx = idx * resolution + c;
      }
      occ[idx] = 1;
    }
  };
  mark(pred, occ_a);
  mark(gt, occ_b);

  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < count; ++i) {
    inter += occ_a[i] & occ_b[i];
    uni += occ_a[i] | occ_b[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double chamfer(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  require(!pred.empty() && !gt.empty(), Errc::InvalidArgument, "chamfer: empty cloud");
  KdTree tree_gt(gt);
  KdTree tree_pred(pred);
  double sum_pg = 0.0;
  for (const Vec3& p : pred) sum_pg += std::sqrt(tree_gt.nearest_sq(p));
  double sum_gp = 0.0;
  for (const Vec3& p : gt) sum_gp += std::sqrt(tree_pred.nearest_sq(p));
  return 0.5 * (sum_pg / pred.size() + sum_gp / gt.size());
}

double corr_l2(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  require(pred.size() == gt.size(), Errc::ShapeMismatch, "corr_l2: size mismatch");
  require(!pred.empty(), Errc::InvalidArgument, "corr_l2: empty cloud");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - gt[i]).norm();
  return sum / static_cast<double>(pred.size());
}

SequenceMetrics evaluate_sequence(const std::vector<std::vector<Vec3>>& pred,
                                  const std::vector<std::vector<Vec3>>& gt, int resolution) {
  require(pred.size() == gt.size() && !pred.empty(), Errc::ShapeMismatch,
          "evaluate_sequence: frame count mismatch");
  SequenceMetrics m;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    m.viou += viou(pred[f], gt[f], resolution);
    m.chamfer += chamfer(pred[f], gt[f]);
    m.corr_l2 += corr_l2(pred[f], gt[f]);
  }
  double fr = static_cast<double>(pred.size());
  m.viou /= fr;
  m.chamfer /= fr;
  m.corr_l2 /= fr;
  return m;
}

}  // namespace physdyn::metrics
