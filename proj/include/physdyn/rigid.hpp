#pragma once

#include "physdyn/mpm.hpp"
#include "physdyn/point_cloud.hpp"

namespace physdyn::rigid {

struct RigidConfig {
  double restitution = 0.3;
  double friction = 0.4;
  int substeps_per_frame = 60;
};

struct RigidState {
  Vec3 com = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
  Mat3 inertia_body = Mat3::Identity();
  std::vector<Vec3> body_offsets;
  double mass = 1.0;

  Vec3 world_point(int i) const {
    return com + orientation.toRotationMatrix() * body_offsets[i];
  }
};

// Gravity + drag force at the drag point (with torque), impulse-based
// floor contact at the deepest penetrating point, positional projection
// for residual penetration. Same trajectory contract as the MPM backend;
// def_grads come back as identity.
TrajectorySequence rigid_simulate(const PointCloud& object, const PhysicsCondition& cond,
                                  const mpm::SimConfig& sim_cfg, const RigidConfig& cfg,
                                  int num_frames);

}  // namespace physdyn::rigid
