#pragma once

#include <vector>

#include "physdyn/point_cloud.hpp"

namespace physdyn::metrics {

// Exact nearest-neighbor KD-tree over a fixed point set.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points);

  // squared distance to the nearest point
  double nearest_sq(const Vec3& query) const;

 private:
  struct Node {
    Vec3 point;
    int axis = 0;
    int left = -1, right = -1;
  };
  int build(std::vector<Vec3>& pts, int lo, int hi);
  void search(int node, const Vec3& q, double& best) const;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct SequenceMetrics {
  double viou = 0.0;
  double chamfer = 0.0;
  double corr_l2 = 0.0;
};

// IoU of the occupied voxel sets over the union bounding box expanded 5%.
double viou(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, int resolution = 32);

// Symmetric Chamfer distance: mean of the mean nearest-neighbor Euclidean
// distances in both directions.
double chamfer(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Mean Euclidean distance between corresponding points.
double corr_l2(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Per-frame metrics averaged across frames.
SequenceMetrics evaluate_sequence(const std::vector<std::vector<Vec3>>& pred,
                                  const std::vector<std::vector<Vec3>>& gt,
                                  int resolution = 32);

}  // namespace physdyn::metrics
