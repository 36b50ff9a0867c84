#pragma once

#include <string>

#include "physdyn/point_cloud.hpp"

namespace physdyn::data {

// One stored animation: the trajectory, its condition, and the object
// weight G (total mass * |gravity|) used to scale force features.
struct TrajectoryRecord {
  TrajectorySequence traj;
  PhysicsCondition cond;
  double object_weight = 0.0;
};

// PTRJ binary layout (little-endian):
//   magic "PTRJ", version u32 = 1
//   N u32, F u32, material u8, flags u8 (bit0: def_grads + affines present), pad u16
//   condition: 11 x f32 = force[3], drag_point[3], E, nu, floor_h, frame_dt, reserved
//     (the reserved slot carries the object weight G; zero when unknown)
//   positions: (F+1) * N * 3 f32, frame 0 first
//   if flags bit0: def_grads F * N * 9 f32 row-major, then affines F * N * 9 f32
void write_trajectory(const std::string& path, const TrajectorySequence& traj,
                      const PhysicsCondition& cond, double object_weight = 0.0);

TrajectoryRecord read_trajectory(const std::string& path);

}  // namespace physdyn::data
