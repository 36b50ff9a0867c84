#pragma once

#include <Eigen/Dense>
#include <vector>

#include "physdyn/common.hpp"

namespace physdyn::nn {

// Variance-preserving cosine schedule: alpha_t^2 + sigma_t^2 = 1,
// alpha_0 = 1, alpha_T = 0. Indexed by t in [0, T].
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int num_steps);

  int num_steps() const { return num_steps_; }
  double alpha(int t) const;
  double sigma(int t) const;

  // alpha_t * traj + sigma_t * eps for a training noise level t in [1, T].
  // Frame 0 is never part of `traj`; it only conditions the denoiser.
  template <typename MatT>
  MatT add_noise(const MatT& traj, int t, const MatT& eps) const {
    require(t >= 1 && t <= num_steps_, Errc::InvalidArgument,
            "add_noise: t must lie in [1, T]");
    require(traj.rows() == eps.rows() && traj.cols() == eps.cols(), Errc::ShapeMismatch,
            "add_noise: noise shape mismatch");
    return alpha(t) * traj + sigma(t) * eps;
  }

 private:
  int num_steps_;
  std::vector<double> alpha_, sigma_;
};

}  // namespace physdyn::nn
