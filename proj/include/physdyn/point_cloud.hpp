#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "physdyn/common.hpp"

namespace physdyn {

enum class Material : std::uint8_t { Elastic = 0, Plasticine = 1, Sand = 2, Rigid = 3 };

const char* material_name(Material m);
std::optional<Material> material_from_name(const std::string& name);

struct PointCloud {
  std::vector<Vec3> positions;

  int size() const { return static_cast<int>(positions.size()); }
  Vec3 centroid() const;
  void bounds(Vec3& lo, Vec3& hi) const;
};

// Condition vector for one animation: applied force, where it acts,
// material stiffness parameters, and the floor height.
struct PhysicsCondition {
  Vec3 force = Vec3::Zero();        // Newtons (constant over the clip)
  Vec3 drag_point = Vec3::Zero();   // normalized domain coordinates
  double youngs_modulus = 1e5;      // Pa
  double poisson_ratio = 0.3;
  double floor_height = 0.0;        // normalized domain units
  Material material = Material::Elastic;

  void validate() const;
};

// Frame 0 (the input cloud) is kept separate from the F simulated frames.
// def_grads / affines are recorded at frame boundaries for MPM materials.
struct TrajectorySequence {
  PointCloud initial;                         // frame 0
  std::vector<std::vector<Vec3>> frames;      // F x N
  std::vector<std::vector<Mat3>> def_grads;   // F x N, optional (empty if absent)
  std::vector<std::vector<Mat3>> affines;     // F x N, optional, units 1/s
  double frame_dt = 1.0 / 24.0;

  int num_frames() const { return static_cast<int>(frames.size()); }
  int num_points() const { return initial.size(); }
  bool has_def_grads() const { return !def_grads.empty(); }
  bool has_affines() const { return !affines.empty(); }
  void validate() const;
};

// x' = scale * x + translation, isotropic.
struct DomainTransform {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * x + translation; }
  Vec3 invert(const Vec3& x) const { return (x - translation) / scale; }
};

// Maps the bounding box into [margin, 1-margin]^3 with an isotropic scale,
// centered; the longest axis spans the full inner box.
// Errors if all points coincide.
std::pair<PointCloud, DomainTransform> normalize_to_domain(const PointCloud& points, double margin);

// Deterministic greedy farthest point sampling seeded at start_index,
// ties broken by lowest index. O(N*k).
PointCloud farthest_point_sample(const PointCloud& points, int k, int start_index = 0);

// Object volume from voxel occupancy of the cloud's bounding box.
// Used for the uniform-density particle mass model.
double estimate_volume(const PointCloud& cloud, int resolution = 16);

}  // namespace physdyn
