#include "physdyn/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace physdyn {

const char* material_name(Material m) {
  switch (m) {
    case Material::Elastic: return "elastic";
    case Material::Plasticine: return "plasticine";
    case Material::Sand: return "sand";
    case Material::Rigid: return "rigid";
  }
  return "unknown";
}

std::optional<Material> material_from_name(const std::string& name) {
  if (name == "elastic") return Material::Elastic;
  if (name == "plasticine") return Material::Plasticine;
  if (name == "sand") return Material::Sand;
  if (name == "rigid") return Material::Rigid;
  return std::nullopt;
}

Vec3 PointCloud::centroid() const {
  require(!positions.empty(), Errc::InvalidArgument, "centroid of empty cloud");
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : positions) c += p;
  return c / static_cast<double>(positions.size());
}

void PointCloud::bounds(Vec3& lo, Vec3& hi) const {
  require(!positions.empty(), Errc::InvalidArgument, "bounds of empty cloud");
  lo = positions[0];
  hi = positions[0];
  for (const Vec3& p : positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
}

void PhysicsCondition::validate() const {
  require(youngs_modulus > 0.0, Errc::InvalidArgument, "condition: E must be positive");
  require(poisson_ratio > 0.0 && poisson_ratio < 0.5, Errc::InvalidArgument,
          "condition: nu must lie in (0, 0.5)");
  require(floor_height >= 0.0 && floor_height <= 1.0, Errc::InvalidArgument,
          "condition: floor height must lie in [0, 1]");
  require(force.allFinite() && drag_point.allFinite(), Errc::InvalidArgument,
          "condition: non-finite force or drag point");
}

void TrajectorySequence::validate() const {
  int n = num_points();
  require(n >= 1, Errc::InvalidArgument, "trajectory: empty initial cloud");
  for (const auto& f : frames)
    require(static_cast<int>(f.size()) == n, Errc::ShapeMismatch,
            "trajectory: frame point count mismatch");
  if (!def_grads.empty())
    require(static_cast<int>(def_grads.size()) == num_frames(), Errc::ShapeMismatch,
            "trajectory: def_grad frame count mismatch");
  if (!affines.empty())
    require(static_cast<int>(affines.size()) == num_frames(), Errc::ShapeMismatch,
            "trajectory: affine frame count mismatch");
  require(frame_dt > 0.0, Errc::InvalidArgument, "trajectory: frame_dt must be positive");
}

std::pair<PointCloud, DomainTransform> normalize_to_domain(const PointCloud& points, double margin) {
  require(points.size() >= 1, Errc::InvalidArgument, "normalize_to_domain: empty cloud");
  require(margin >= 0.0 && margin < 0.5, Errc::InvalidArgument,
          "normalize_to_domain: margin must lie in [0, 0.5)");
  for (const Vec3& p : points.positions)
    require(p.allFinite(), Errc::InvalidArgument, "normalize_to_domain: non-finite coordinate");

  Vec3 lo, hi;
  points.bounds(lo, hi);
  Vec3 extent = hi - lo;
  double max_extent = extent.maxCoeff();
  require(max_extent > 0.0, Errc::DegenerateInput,
          "normalize_to_domain: degenerate bounding box (all points identical)");

  DomainTransform t;
  t.scale = (1.0 - 2.0 * margin) / max_extent;
  Vec3 center = 0.5 * (lo + hi);
  t.translation = Vec3::Constant(0.5) - t.scale * center;

  PointCloud out;
  out.positions.reserve(points.positions.size());
  for (const Vec3& p : points.positions) out.positions.push_back(t.apply(p));
  return {out, t};
}

PointCloud farthest_point_sample(const PointCloud& points, int k, int start_index) {
  int n = points.size();
  require(k >= 1 && k <= n, Errc::InvalidArgument, "farthest_point_sample: need 1 <= k <= N");
  require(start_index >= 0 && start_index < n, Errc::InvalidArgument,
          "farthest_point_sample: start index out of range");

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  PointCloud out;
  out.positions.reserve(k);
  int current = start_index;
  for (int s = 0; s < k; ++s) {
    out.positions.push_back(points.positions[current]);
    const Vec3& c = points.positions[current];
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      double d2 = (points.positions[i] - c).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      // strict > keeps the lowest index on ties
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return out;
}

double estimate_volume(const PointCloud& cloud, int resolution) {
  require(cloud.size() >= 1, Errc::InvalidArgument, "estimate_volume: empty cloud");
  require(resolution >= 1, Errc::InvalidArgument, "estimate_volume: resolution must be >= 1");
  Vec3 lo, hi;
  cloud.bounds(lo, hi);
  Vec3 extent = (hi - lo).cwiseMax(1e-12);
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(resolution) * resolution * resolution, 0);
  for (const Vec3& p : cloud.positions) {
    int ix = std::min(resolution - 1, static_cast<int>((p.x() - lo.x()) / extent.x() * resolution));
    int iy = std::min(resolution - 1, static_cast<int>((p.y() - lo.y()) / extent.y() * resolution));
    int iz = std::min(resolution - 1, static_cast<int>((p.z() - lo.z()) / extent.z() * resolution));
    occ[(static_cast<std::size_t>(ix) * resolution + iy) * resolution + iz] = 1;
  }
  std::size_t occupied = 0;
  for (std::uint8_t v : occ) occupied += v;
  double frac = static_cast<double>(occupied) / static_cast<double>(occ.size());
  return frac * extent.prod();
}

}  // namespace physdyn
