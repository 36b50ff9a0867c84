#pragma once

#include <functional>

#include "physdyn/nn/network.hpp"
#include "physdyn/trajectory_io.hpp"

namespace physdyn::inverse {

using nn::Mat;
using nn::ModelConfig;
using nn::ParamStore;

struct EnergyConfig {
  int num_t_samples = 32;
  std::uint64_t seed = 0;
  // When set, the energy compares the denoised output against the noisy
  // input P_t instead of the clean trajectory.
  bool literal_noisy_target = false;
};

// Monte-Carlo denoising energy: mean over a fixed seeded pool of (t, eps)
// draws of the mean squared error between the target and the denoised
// trajectory under the given condition. The pool depends only on the seed,
// so energies of different conditions are paired.
double denoise_energy(const ModelConfig& cfg, const ParamStore& params,
                      const data::TrajectoryRecord& record, const PhysicsCondition& cond,
                      const EnergyConfig& ecfg);

// Energy core over an arbitrary denoiser (noisy, t) -> prediction; the
// network path above goes through this. Exposed so tests can evaluate the
// pool against reference denoisers.
double denoise_energy_with(const Mat& target, int diffusion_steps, const EnergyConfig& ecfg,
                           const std::function<Mat(const Mat&, int)>& denoiser);

struct FreeParams {
  bool log_e = true;
  bool nu = false;
  bool force = false;
  bool floor = false;

  bool any() const { return log_e || nu || force || floor; }
};

struct EstimateConfig {
  EnergyConfig energy;
  int iterations = 200;
  double lr = 0.05;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
};

struct EstimateResult {
  PhysicsCondition cond;
  std::vector<double> energy_trace;
  bool diverged = false;
};

// Gradient descent on the free condition parameters through the frozen
// denoiser. log10(E) is the stiffness variable; nu moves in logit space
// over its training range. Returns the best-energy condition; flags
// divergence after 10 consecutive energy increases.
EstimateResult estimate_params(const ModelConfig& cfg, const ParamStore& params,
                               const data::TrajectoryRecord& record,
                               const PhysicsCondition& init_cond, const FreeParams& free,
                               const EstimateConfig& ecfg);

}  // namespace physdyn::inverse
