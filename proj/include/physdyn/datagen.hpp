#pragma once

#include <array>
#include <string>
#include <vector>

#include "physdyn/mesh.hpp"
#include "physdyn/mpm.hpp"
#include "physdyn/rigid.hpp"
#include "physdyn/trajectory_io.hpp"

namespace physdyn::data {

enum class Scenario { DragForce, GravityDrop };

struct DatasetSpec {
  std::array<int, 4> counts{1, 0, 0, 0};  // per Material enum order
  int num_points = 2048;
  int num_frames = 24;
  std::uint64_t seed = 0;
  double e_min = 1e4, e_max = 1e7;           // sampled log-uniformly
  double nu_min = 0.05, nu_max = 0.45;
  double force_min_rel = 0.02, force_max_rel = 0.3;  // relative to object weight G
  double noise_sigma = 0.01;
  Scenario scenario = Scenario::DragForce;
  double drop_clearance = 0.05;
  int normal_neighbors = 16;
  mpm::SimConfig sim;
  rigid::RigidConfig rigid;

  int total_count() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

// Drag point uniform over P0, force along the outward PCA surface normal,
// magnitude uniform in [force_min_rel, force_max_rel] * G, E log-uniform,
// nu uniform. Floor at the object base (DragForce) or below it (GravityDrop,
// where the force is zero).
PhysicsCondition sample_condition(const PointCloud& object, Rng& rng, const DatasetSpec& spec,
                                  Material material);

// Outward surface normal at a cloud point from k-nearest-neighbor PCA,
// oriented away from the centroid.
Vec3 outward_normal(const PointCloud& object, int point_index, int k);

// Object weight G = total mass * |gravity| under the uniform-density model.
double object_weight(const PointCloud& object, const mpm::SimConfig& sim);

struct AugmentOptions {
  bool rotate = true;
  bool renormalize = true;
  double margin = 0.1;
};

// Random rotation about the vertical axis through the centroid, per-point
// Gaussian noise, then re-normalization into the domain.
PointCloud augment(const PointCloud& object, Rng& rng, double noise_sigma,
                   const AugmentOptions& opts = {});

struct ManifestRow {
  std::string file;  // empty for skipped animations
  std::uint64_t seed = 0;
  Material material = Material::Elastic;
  PhysicsCondition cond;
  std::string status;  // "ok" or a failure reason
};

struct DatasetResult {
  std::vector<ManifestRow> rows;       // successful animations, in index order
  std::vector<ManifestRow> skipped;    // failures with reasons
  std::string manifest_path;
};

// One trajectory file per animation plus manifest.jsonl; failed simulations
// are skipped and recorded in manifest_skips.jsonl. Deterministic from
// (seed, spec, mesh order): every animation derives its own Rng stream.
DatasetResult generate_dataset(const DatasetSpec& spec, const std::vector<TriMesh>& meshes,
                               const std::string& out_dir);

}  // namespace physdyn::data
