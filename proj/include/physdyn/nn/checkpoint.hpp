#pragma once

#include <string>

#include "physdyn/nn/network.hpp"

namespace physdyn::nn {

// PDMC binary layout (little-endian):
//   magic "PDMC", version u32 = 1
//   config: 8 x i32 = layers, latent, heads, cond_dim, mlp_ratio, points,
//           frames, diffusion_steps; 4 x f64 = e_log_min, e_log_max,
//           nu_min, nu_max
//   u32 block count; per block: u32 name length, name bytes,
//   u32 rows, u32 cols, then rows*cols f32 values row-major
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& params);

struct Checkpoint {
  ModelConfig cfg;
  ParamStore params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace physdyn::nn
