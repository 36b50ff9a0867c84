#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "physdyn/nn/network.hpp"
#include "physdyn/trajectory_io.hpp"

namespace physdyn::nn {

struct TrainConfig {
  int steps = 5000;
  int batch_size = 4;
  double lr = 1e-4;
  int warmup_steps = 100;
  double clip_norm = 1.0;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  loss::LossWeights weights;
  loss::GridConfig loss_grid;
  std::uint64_t seed = 0;
};

// A record flattened into training buffers. The physics-loss side inputs
// are null for rigid material or when F/C are absent.
struct TrainSample {
  Mat target;   // frames*points x 3
  Mat frame0;   // points x 3
  Mat cond_feats;
  std::shared_ptr<const PhysicsAux> aux;
  Material material = Material::Elastic;
  double floor_height = 0.0;
};

TrainSample prepare_sample(const data::TrajectoryRecord& rec, const ModelConfig& cfg,
                           const loss::GridConfig& grid);

struct LossLogRow {
  int step = 0;
  double lr = 0.0;
  double total = 0.0, diffusion = 0.0, velocity = 0.0, physics = 0.0, floor = 0.0;
};

struct TrainResult {
  ParamStore params;
  std::vector<LossLogRow> log;
};

// Signal-prediction diffusion training: per step, draw batch items, noise
// levels t ~ U[1, T] and Gaussian noise, denoise, and minimize the total
// loss with Adam (cosine-decayed learning rate, linear warmup, global
// gradient-norm clipping). Deterministic given the seed.
TrainResult train(const std::vector<TrainSample>& dataset, const ModelConfig& cfg,
                  const TrainConfig& tcfg,
                  const std::function<void(const LossLogRow&)>& on_step = nullptr);

}  // namespace physdyn::nn
