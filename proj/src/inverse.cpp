#include "physdyn/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "physdyn/nn/schedule.hpp"

namespace physdyn::inverse {

namespace {

using nn::BoundParams;
using nn::Graph;
using nn::NoiseSchedule;

struct NoisePool {
  std::vector<int> ts;
  std::vector<Mat> eps;
};

NoisePool draw_pool(const ModelConfig& cfg, const EnergyConfig& ecfg) {
  NoisePool pool;
  Rng rng(ecfg.seed, 7);
  int rows = cfg.frames * cfg.points;
  pool.ts.reserve(ecfg.num_t_samples);
  pool.eps.reserve(ecfg.num_t_samples);
  for (int s = 0; s < ecfg.num_t_samples; ++s) {
    pool.ts.push_back(1 + rng.uniform_int(cfg.diffusion_steps));
    Mat e(rows, 3);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < 3; ++c) e(r, c) = rng.normal();
    pool.eps.push_back(std::move(e));
  }
  return pool;
}

struct EnergyEval {
  const ModelConfig& cfg;
  const ParamStore& params;
  Mat target;  // clean trajectory, frames*points x 3
  Mat frame0;
  NoisePool pool;
  NoiseSchedule schedule;
  bool literal;

  EnergyEval(const ModelConfig& c, const ParamStore& p, const data::TrajectoryRecord& rec,
             const EnergyConfig& ecfg)
      : cfg(c), params(p), pool(draw_pool(c, ecfg)), schedule(c.diffusion_steps),
        literal(ecfg.literal_noisy_target) {
    rec.traj.validate();
    require(rec.traj.num_points() == cfg.points && rec.traj.num_frames() == cfg.frames,
            Errc::ShapeMismatch, "denoise_energy: trajectory shape does not match the model");
    int n = cfg.points, f = cfg.frames;
    frame0.resize(n, 3);
    for (int p2 = 0; p2 < n; ++p2)
      frame0.row(p2) = rec.traj.initial.positions[p2].transpose();
    target.resize(static_cast<Eigen::Index>(f) * n, 3);
    for (int fr = 0; fr < f; ++fr)
      for (int p2 = 0; p2 < n; ++p2)
        target.row(static_cast<Eigen::Index>(fr) * n + p2) = rec.traj.frames[fr][p2].transpose();
  }

  // energy and (optionally) its gradient with respect to the 13 features
  double evaluate(const Mat& feats, Mat* grad_feats) const {
    double energy = 0.0;
    if (grad_feats) grad_feats->setZero();
    int samples = static_cast<int>(pool.ts.size());
    for (int s = 0; s < samples; ++s) {
      int t = pool.ts[s];
      Mat noisy = schedule.alpha(t) * target + schedule.sigma(t) * pool.eps[s];
      Graph g;
      BoundParams bound = nn::bind_params(g, params, false);
      auto feats_var = g.input(feats, grad_feats != nullptr);
      auto noisy_var = g.input(noisy);
      auto p0_var = g.input(frame0);
      auto pred = nn::forward_denoise(g, params, bound, cfg, noisy_var, t, feats_var, p0_var);
      auto err = g.mse(pred, literal ? noisy : target);
      energy += g.value(err)(0, 0);
      if (grad_feats) {
        g.backward(err);
        if (g.grad_populated(feats_var)) *grad_feats += g.grad(feats_var);
      }
    }
    energy /= samples;
    if (grad_feats) *grad_feats /= samples;
    return energy;
  }
};

double logit(double u) { return std::log(u / (1.0 - u)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double denoise_energy(const ModelConfig& cfg, const ParamStore& params,
                      const data::TrajectoryRecord& record, const PhysicsCondition& cond,
                      const EnergyConfig& ecfg) {
  require(ecfg.num_t_samples >= 1, Errc::InvalidArgument,
          "denoise_energy: need at least one sample");
  EnergyEval eval(cfg, params, record, ecfg);
  Mat feats = nn::condition_features(cond, record.object_weight, cfg);
  return eval.evaluate(feats, nullptr);
}

double denoise_energy_with(const Mat& target, int diffusion_steps, const EnergyConfig& ecfg,
                           const std::function<Mat(const Mat&, int)>& denoiser) {
  require(ecfg.num_t_samples >= 1, Errc::InvalidArgument,
          "denoise_energy_with: need at least one sample");
  ModelConfig shape_cfg;
  shape_cfg.points = static_cast<int>(target.rows());
  shape_cfg.frames = 1;
  shape_cfg.diffusion_steps = diffusion_steps;
  NoisePool pool = draw_pool(shape_cfg, ecfg);
  NoiseSchedule schedule(diffusion_steps);
  double energy = 0.0;
  for (int s = 0; s < ecfg.num_t_samples; ++s) {
    int t = pool.ts[s];
    Mat noisy = schedule.alpha(t) * target + schedule.sigma(t) * pool.eps[s];
    Mat pred = denoiser(noisy, t);
    const Mat& ref = ecfg.literal_noisy_target ? noisy : target;
    energy += (pred - ref).squaredNorm() / static_cast<double>(target.size());
  }
  return energy / ecfg.num_t_samples;
}

EstimateResult estimate_params(const ModelConfig& cfg, const ParamStore& params,
                               const data::TrajectoryRecord& record,
                               const PhysicsCondition& init_cond, const FreeParams& free,
                               const EstimateConfig& ecfg) {
  EstimateResult result;
  result.cond = init_cond;

  EnergyEval eval(cfg, params, record, ecfg.energy);

  if (!free.any()) {
    Mat feats = nn::condition_features(init_cond, record.object_weight, cfg);
    result.energy_trace.push_back(eval.evaluate(feats, nullptr));
    return result;
  }

  // optimization variables: log10(E), logit-space nu, raw force, floor h
  double theta_log_e = std::log10(init_cond.youngs_modulus);
  double nu_frac = (init_cond.poisson_ratio - cfg.nu_min) / (cfg.nu_max - cfg.nu_min);
  double theta_nu = logit(std::clamp(nu_frac, 1e-4, 1.0 - 1e-4));
  Vec3 theta_force = init_cond.force;
  double theta_h = init_cond.floor_height;

  auto to_condition = [&]() {
    PhysicsCondition c = init_cond;
    if (free.log_e) c.youngs_modulus = std::pow(10.0, theta_log_e);
    if (free.nu) c.poisson_ratio = cfg.nu_min + (cfg.nu_max - cfg.nu_min) * sigmoid(theta_nu);
    if (free.force) c.force = theta_force;
    if (free.floor) c.floor_height = std::clamp(theta_h, 0.0, 1.0);
    return c;
  };

  constexpr int kDim = 6;  // log_e, nu, force xyz, floor
  double m[kDim] = {0}, v[kDim] = {0};
  double best_energy = std::numeric_limits<double>::infinity();
  PhysicsCondition best_cond = init_cond;
  int increases = 0;
  double prev_energy = std::numeric_limits<double>::infinity();
  Mat grad_feats(1, nn::kConditionFeatures);

  for (int it = 0; it < ecfg.iterations; ++it) {
    PhysicsCondition cond = to_condition();
    Mat feats = nn::condition_features(cond, record.object_weight, cfg);
    double energy = eval.evaluate(feats, &grad_feats);
    result.energy_trace.push_back(energy);
    if (energy < best_energy) {
      best_energy = energy;
      best_cond = cond;
    }
    if (energy > prev_energy) {
      if (++increases >= 10) {
        result.diverged = true;
        break;
      }
    } else {
      increases = 0;
    }
    prev_energy = energy;

    // chain rule through the feature standardization
    double g[kDim] = {0};
    if (free.log_e) g[0] = grad_feats(0, 6) * 2.0 / (cfg.e_log_max - cfg.e_log_min);
    if (free.nu) {
      double s = sigmoid(theta_nu);
      g[1] = grad_feats(0, 7) * 2.0 * s * (1.0 - s);
    }
    if (free.force) {
      double weight = record.object_weight > 0.0 ? record.object_weight : 1.0;
      g[2] = grad_feats(0, 0) / weight;
      g[3] = grad_feats(0, 1) / weight;
      g[4] = grad_feats(0, 2) / weight;
    }
    if (free.floor) g[5] = grad_feats(0, 8) * 2.0;

    double bc1 = 1.0 - std::pow(ecfg.beta1, it + 1);
    double bc2 = 1.0 - std::pow(ecfg.beta2, it + 1);
    double upd[kDim];
    for (int i = 0; i < kDim; ++i) {
      m[i] = ecfg.beta1 * m[i] + (1.0 - ecfg.beta1) * g[i];
      v[i] = ecfg.beta2 * v[i] + (1.0 - ecfg.beta2) * g[i] * g[i];
      upd[i] = ecfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + ecfg.adam_eps);
    }
    if (free.log_e) theta_log_e -= upd[0];
    if (free.nu) theta_nu -= upd[1];
    if (free.force) theta_force -= Vec3(upd[2], upd[3], upd[4]);
    if (free.floor) theta_h -= upd[5];
  }

  // final candidate after the last update
  {
    PhysicsCondition cond = to_condition();
    Mat feats = nn::condition_features(cond, record.object_weight, cfg);
    double energy = eval.evaluate(feats, nullptr);
    if (energy < best_energy) {
      best_energy = energy;
      best_cond = cond;
    }
  }
  result.cond = best_cond;
  return result;
}

}  // namespace physdyn::inverse
