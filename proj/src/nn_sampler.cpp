#include "physdyn/nn/sampler.hpp"

#include <cmath>

namespace physdyn::nn {

TrajectorySequence ddim_sample(const ModelConfig& cfg, const ParamStore& params,
                               const PhysicsCondition& cond, double object_weight,
                               const PointCloud& p0, int steps, Rng& rng, double frame_dt) {
  cfg.validate();
  require(steps >= 1, Errc::InvalidArgument, "ddim_sample: need at least one step");
  require(p0.size() == cfg.points, Errc::ShapeMismatch,
          "ddim_sample: P0 has " + std::to_string(p0.size()) + " points, model expects " +
              std::to_string(cfg.points));

  int n = cfg.points, f = cfg.frames;
  NoiseSchedule schedule(cfg.diffusion_steps);

  Mat p0_mat(n, 3);
  for (int p = 0; p < n; ++p) p0_mat.row(p) = p0.positions[p].transpose();
  Mat feats = condition_features(cond, object_weight, cfg);

  Mat x(static_cast<Eigen::Index>(f) * n, 3);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (int c = 0; c < 3; ++c) x(r, c) = rng.normal();

  // evenly spaced sub-schedule T = t_0 > t_1 > ... > t_steps = 0
  std::vector<int> ts(steps + 1);
  for (int k = 0; k <= steps; ++k)
    ts[k] = static_cast<int>(std::lround(
        static_cast<double>(cfg.diffusion_steps) * (steps - k) / steps));

  Mat pred;
  for (int k = 0; k < steps; ++k) {
    int t = ts[k], t_next = ts[k + 1];
    Graph g;
    BoundParams bound = bind_params(g, params, false);
    auto noisy_var = g.input(x);
    auto feats_var = g.input(feats);
    auto p0_var = g.input(p0_mat);
    auto out = forward_denoise(g, params, bound, cfg, noisy_var, t, feats_var, p0_var);
    pred = g.value(out);
    require(pred.allFinite(), Errc::SimulationError,
            "ddim_sample: non-finite prediction at step t=" + std::to_string(t));

    double sigma_t = schedule.sigma(t);
    Mat eps_hat = sigma_t > 0.0 ? Mat(((x - schedule.alpha(t) * pred) / sigma_t))
                                : Mat(Mat::Zero(x.rows(), x.cols()));
    x = schedule.alpha(t_next) * pred + schedule.sigma(t_next) * eps_hat;
  }

  TrajectorySequence traj;
  traj.initial = p0;
  traj.frame_dt = frame_dt;
  traj.frames.resize(f);
  for (int fr = 0; fr < f; ++fr) {
    traj.frames[fr].resize(n);
    for (int p = 0; p < n; ++p)
      traj.frames[fr][p] = x.row(static_cast<Eigen::Index>(fr) * n + p).transpose();
  }
  return traj;
}

}  // namespace physdyn::nn
