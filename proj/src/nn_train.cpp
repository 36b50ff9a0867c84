#include "physdyn/nn/train.hpp"

#include <cmath>

namespace physdyn::nn {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TrainSample prepare_sample(const data::TrajectoryRecord& rec, const ModelConfig& cfg,
                           const loss::GridConfig& grid) {
  const TrajectorySequence& traj = rec.traj;
  traj.validate();
  require(traj.num_points() == cfg.points, Errc::ShapeMismatch,
          "prepare_sample: trajectory has " + std::to_string(traj.num_points()) +
              " points, model expects " + std::to_string(cfg.points));
  require(traj.num_frames() == cfg.frames, Errc::ShapeMismatch,
          "prepare_sample: trajectory has " + std::to_string(traj.num_frames()) +
              " frames, model expects " + std::to_string(cfg.frames));

  int n = cfg.points, f = cfg.frames;
  TrainSample s;
  s.material = rec.cond.material;
  s.floor_height = rec.cond.floor_height;
  s.cond_feats = condition_features(rec.cond, rec.object_weight, cfg);
  s.frame0.resize(n, 3);
  for (int p = 0; p < n; ++p) s.frame0.row(p) = traj.initial.positions[p].transpose();
  s.target.resize(static_cast<Eigen::Index>(f) * n, 3);
  for (int fr = 0; fr < f; ++fr)
    for (int p = 0; p < n; ++p)
      s.target.row(static_cast<Eigen::Index>(fr) * n + p) = traj.frames[fr][p].transpose();

  if (s.material != Material::Rigid && traj.has_def_grads() && traj.has_affines()) {
    auto aux = std::make_shared<PhysicsAux>();
    aux->frame0 = s.frame0;
    aux->def_grads = traj.def_grads;
    aux->affines = traj.affines;
    aux->masses.assign(n, 1.0);  // uniform particle masses cancel in the transfer
    aux->grid = grid;
    aux->frame_dt = traj.frame_dt;
    s.aux = std::move(aux);
  }
  return s;
}

TrainResult train(const std::vector<TrainSample>& dataset, const ModelConfig& cfg,
                  const TrainConfig& tcfg,
                  const std::function<void(const LossLogRow&)>& on_step) {
  cfg.validate();
  require(!dataset.empty(), Errc::InvalidArgument, "train: empty dataset");
  if (tcfg.weights.physics > 0.0)
    for (const TrainSample& s : dataset)
      require(s.aux != nullptr || s.material == Material::Rigid, Errc::InvalidArgument,
              "train: physics loss weight > 0 but a sample lacks ground-truth F/C");

  int n = cfg.points, f = cfg.frames;
  NoiseSchedule schedule(cfg.diffusion_steps);
  Rng init_rng(tcfg.seed, 0);
  Rng step_rng(tcfg.seed, 1);

  TrainResult result;
  result.params = init_params(cfg, init_rng);
  std::size_t num_params = result.params.size();

  std::vector<Mat> adam_m(num_params), adam_v(num_params), grads(num_params);
  for (std::size_t i = 0; i < num_params; ++i) {
    const Mat& p = result.params.entry(i).second;
    adam_m[i] = Mat::Zero(p.rows(), p.cols());
    adam_v[i] = Mat::Zero(p.rows(), p.cols());
  }

  result.log.reserve(tcfg.steps);
  for (int step = 0; step < tcfg.steps; ++step) {
    for (std::size_t i = 0; i < num_params; ++i) {
      const Mat& p = result.params.entry(i).second;
      grads[i] = Mat::Zero(p.rows(), p.cols());
    }
    LossLogRow row;
    row.step = step;

    for (int b = 0; b < tcfg.batch_size; ++b) {
      const TrainSample& sample = dataset[step_rng.uniform_int(static_cast<int>(dataset.size()))];
      int t = 1 + step_rng.uniform_int(cfg.diffusion_steps);
      Mat noise(static_cast<Eigen::Index>(f) * n, 3);
      for (Eigen::Index r = 0; r < noise.rows(); ++r)
        for (int c = 0; c < 3; ++c) noise(r, c) = step_rng.normal();

      Mat noisy = schedule.add_noise(sample.target, t, noise);

      Graph g;
      BoundParams bound = bind_params(g, result.params, true);
      auto noisy_var = g.input(std::move(noisy));
      auto feats = g.input(sample.cond_feats);
      auto p0 = g.input(sample.frame0);
      auto pred = forward_denoise(g, result.params, bound, cfg, noisy_var, t, feats, p0);

      auto l_diff = g.mse(pred, sample.target);
      auto total = l_diff;
      Graph::Var l_vel = -1, l_phys = -1, l_floor = -1;
      if (tcfg.weights.velocity > 0.0 && f >= 2) {
        l_vel = g.velocity_loss(pred, sample.target, f, n);
        total = g.add_scaled(total, l_vel, tcfg.weights.velocity);
      }
      if (tcfg.weights.physics > 0.0 && sample.aux) {
        l_phys = g.physics_loss(pred, sample.aux, f, n);
        total = g.add_scaled(total, l_phys, tcfg.weights.physics);
      }
      if (tcfg.weights.floor > 0.0) {
        l_floor = g.floor_loss(pred, sample.floor_height, f, n);
        total = g.add_scaled(total, l_floor, tcfg.weights.floor);
      }

      double total_val = g.value(total)(0, 0);
      if (!std::isfinite(total_val))
        fail(Errc::SimulationError, "train: non-finite loss at step " + std::to_string(step));
      row.total += total_val;
      row.diffusion += g.value(l_diff)(0, 0);
      if (l_vel >= 0) row.velocity += g.value(l_vel)(0, 0);
      if (l_phys >= 0) row.physics += g.value(l_phys)(0, 0);
      if (l_floor >= 0) row.floor += g.value(l_floor)(0, 0);

      g.backward(total);
      for (std::size_t i = 0; i < num_params; ++i)
        if (g.grad_populated(bound.vars[i])) grads[i] += g.grad(bound.vars[i]);
    }

    double inv_b = 1.0 / tcfg.batch_size;
    row.total *= inv_b;
    row.diffusion *= inv_b;
    row.velocity *= inv_b;
    row.physics *= inv_b;
    row.floor *= inv_b;

    double norm_sq = 0.0;
    for (std::size_t i = 0; i < num_params; ++i) {
      grads[i] *= inv_b;
      norm_sq += grads[i].squaredNorm();
    }
    double grad_norm = std::sqrt(norm_sq);
    if (tcfg.clip_norm > 0.0 && grad_norm > tcfg.clip_norm) {
      double s = tcfg.clip_norm / grad_norm;
      for (auto& gmat : grads) gmat *= s;
    }

    double warm = tcfg.warmup_steps > 0
                      ? std::min(1.0, static_cast<double>(step + 1) / tcfg.warmup_steps)
                      : 1.0;
    double cosine = 0.5 * (1.0 + std::cos(kPi * step / std::max(1, tcfg.steps)));
    double lr = tcfg.lr * warm * cosine;
    row.lr = lr;

    double bc1 = 1.0 - std::pow(tcfg.beta1, step + 1);
    double bc2 = 1.0 - std::pow(tcfg.beta2, step + 1);
    for (std::size_t i = 0; i < num_params; ++i) {
      Mat& p = result.params.entry(i).second;
      adam_m[i] = tcfg.beta1 * adam_m[i] + (1.0 - tcfg.beta1) * grads[i];
      adam_v[i] = tcfg.beta2 * adam_v[i] + (1.0 - tcfg.beta2) * grads[i].array().square().matrix();
      Mat update = (adam_m[i] / bc1).array() /
                   ((adam_v[i] / bc2).array().sqrt() + tcfg.adam_eps);
      if (tcfg.weight_decay > 0.0) update.array() += tcfg.weight_decay * p.array();
      p -= lr * update;
    }

    result.log.push_back(row);
    if (on_step) on_step(row);
  }
  return result;
}

}  // namespace physdyn::nn
