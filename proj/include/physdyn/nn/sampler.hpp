#pragma once

#include "physdyn/nn/network.hpp"

namespace physdyn::nn {

// Deterministic DDIM (eta = 0) over an evenly spaced sub-schedule from T
// down to 0, with the signal prediction at each step. Frame 0 of the
// returned trajectory is the conditioning cloud itself.
TrajectorySequence ddim_sample(const ModelConfig& cfg, const ParamStore& params,
                               const PhysicsCondition& cond, double object_weight,
                               const PointCloud& p0, int steps, Rng& rng, double frame_dt);

inline TrajectorySequence ddim_sample(const ModelConfig& cfg, const ParamStore& params,
                                      const PhysicsCondition& cond, double object_weight,
                                      const PointCloud& p0, Rng& rng, double frame_dt) {
  return ddim_sample(cfg, params, cond, object_weight, p0, 25, rng, frame_dt);
}

}  // namespace physdyn::nn
