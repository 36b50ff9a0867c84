#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "physdyn/nn/checkpoint.hpp"
#include "physdyn/nn/network.hpp"
#include "physdyn/nn/sampler.hpp"
#include "physdyn/nn/schedule.hpp"
#include "physdyn/nn/train.hpp"

using namespace physdyn;
using namespace physdyn::nn;
using namespace testutil;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.latent = 8;
  cfg.heads = 2;
  cfg.cond_dim = 8;
  cfg.mlp_ratio = 2;
  cfg.points = 4;
  cfg.frames = 3;
  cfg.diffusion_steps = 50;
  return cfg;
}

PhysicsCondition demo_cond() {
  PhysicsCondition cond;
  cond.force = Vec3(10.0, 2.0, -4.0);
  cond.drag_point = Vec3(0.4, 0.6, 0.5);
  cond.youngs_modulus = 3e5;
  cond.poisson_ratio = 0.3;
  cond.floor_height = 0.1;
  cond.material = Material::Elastic;
  return cond;
}

Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

Graph::Var build_forward(Graph& g, const ModelConfig& cfg, const ParamStore& params,
                         const Mat& noisy, int t, const Mat& feats, const Mat& p0,
                         BoundParams& bound, bool rg) {
  bound = bind_params(g, params, rg);
  auto noisy_var = g.input(noisy);
  auto feats_var = g.input(feats);
  auto p0_var = g.input(p0);
  return forward_denoise(g, params, bound, cfg, noisy_var, t, feats_var, p0_var);
}

}  // namespace

TEST_CASE("noise schedule: monotone, variance preserving, correct endpoints") {
  NoiseSchedule s(1000);
  CHECK(s.alpha(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.sigma(0) == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(s.alpha(1000) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(s.sigma(1000) == doctest::Approx(1.0).epsilon(1e-6));
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.alpha(t) <= s.alpha(t - 1) + 1e-12);
    CHECK(s.sigma(t) >= s.sigma(t - 1) - 1e-12);
    CHECK(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t) == doctest::Approx(1.0));
  }
}

TEST_CASE("add_noise: limits and variance preservation") {
  NoiseSchedule s(100);
  Rng rng(1);
  Mat x = random_mat(1000, 3, rng);   // unit-variance signal
  Mat eps = random_mat(1000, 3, rng);

  // t -> 0 has alpha = 1, sigma = 0 exactly (schedule endpoint test); the
  // smallest admissible training level t = 1 is already nearly clean
  Mat nearly_clean = s.add_noise(x, 1, eps);
  CHECK((nearly_clean - x).norm() / x.norm() < 0.05);

  Mat pure_noise = s.add_noise(x, 100, eps);
  CHECK((pure_noise - eps).norm() / eps.norm() < 1e-6);

  // empirical variance of alpha x + sigma eps stays 1 within 2%
  for (int t : {25, 50, 75}) {
    Mat mixed = s.add_noise(x, t, eps);
    double var = mixed.squaredNorm() / mixed.size();
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
  }
  CHECK_THROWS_AS(s.add_noise(x, 0, eps), Error);
  CHECK_THROWS_AS(s.add_noise(x, 101, eps), Error);
}

TEST_CASE("condition_features: standardization endpoints") {
  ModelConfig cfg = tiny_config();
  PhysicsCondition cond = demo_cond();
  cond.youngs_modulus = 1e4;
  Mat lo = condition_features(cond, 50.0, cfg);
  CHECK(lo(0, 6) == doctest::Approx(-1.0));
  cond.youngs_modulus = 1e7;
  Mat hi = condition_features(cond, 50.0, cfg);
  CHECK(hi(0, 6) == doctest::Approx(1.0));
  // material one-hot
  CHECK(hi(0, 9) == 1.0);
  cond.material = Material::Sand;
  CHECK(condition_features(cond, 50.0, cfg)(0, 11) == 1.0);
  // force scaled by the object weight
  CHECK(hi(0, 0) == doctest::Approx(10.0 / 50.0));
}

TEST_CASE("embed_condition: deterministic and sized by the config") {
  ModelConfig cfg = tiny_config();
  Rng rng(2);
  ParamStore params = init_params(cfg, rng);
  Mat a = embed_condition(demo_cond(), 50.0, params, cfg);
  Mat b = embed_condition(demo_cond(), 50.0, params, cfg);
  CHECK(a == b);
  CHECK(a.rows() == 1);
  CHECK(a.cols() == cfg.cond_dim);
  PhysicsCondition other = demo_cond();
  other.youngs_modulus = 4e6;
  CHECK((embed_condition(other, 50.0, params, cfg) - a).norm() > 0.0);
}

TEST_CASE("forward_denoise: shape contract and determinism") {
  ModelConfig cfg = tiny_config();
  Rng rng(3);
  ParamStore params = init_params(cfg, rng);
  Mat noisy = random_mat(cfg.frames * cfg.points, 3, rng);
  Mat p0 = random_mat(cfg.points, 3, rng, 0.2);
  Mat feats = condition_features(demo_cond(), 50.0, cfg);

  Graph g1, g2;
  BoundParams b1, b2;
  auto out1 = build_forward(g1, cfg, params, noisy, 7, feats, p0, b1, false);
  auto out2 = build_forward(g2, cfg, params, noisy, 7, feats, p0, b2, false);
  CHECK(g1.value(out1).rows() == cfg.frames * cfg.points);
  CHECK(g1.value(out1).cols() == 3);
  CHECK(g1.value(out1) == g2.value(out2));

  // different t changes the output (step embedding is live)
  Graph g3;
  BoundParams b3;
  auto out3 = build_forward(g3, cfg, params, noisy, 40, feats, p0, b3, false);
  CHECK((g3.value(out3) - g1.value(out1)).norm() > 0.0);
}

TEST_CASE("spatial layer never mixes frames; temporal layer never mixes points") {
  // exercised on a single attention sublayer exactly as the network builds it
  ModelConfig cfg = tiny_config();
  cfg.layers = 1;
  Rng rng(4);
  ParamStore params = init_params(cfg, rng);
  const int n = cfg.points, f = cfg.frames, d = cfg.latent;

  Mat x0 = random_mat(f * n, d, rng);
  Mat cond_tok = random_mat(1, d, rng);
  Mat p0_tok = random_mat(n, d, rng);

  auto spatial_out = [&](const Mat& x) {
    Graph g;
    auto xv = g.input(x);
    auto cv = g.input(cond_tok);
    auto q = g.linear(xv, g.input(params.at("layer0.sp.q.W")), g.input(params.at("layer0.sp.q.b")));
    auto k = g.linear(xv, g.input(params.at("layer0.sp.k.W")), g.input(params.at("layer0.sp.k.b")));
    auto v = g.linear(xv, g.input(params.at("layer0.sp.v.W")), g.input(params.at("layer0.sp.v.b")));
    auto ck = g.linear(cv, g.input(params.at("layer0.sp.k.W")), g.input(params.at("layer0.sp.k.b")));
    auto cvv = g.linear(cv, g.input(params.at("layer0.sp.v.W")), g.input(params.at("layer0.sp.v.b")));
    return Mat(g.value(g.spatial_attention(q, k, v, ck, cvv, cfg.heads, f, n)));
  };
  auto temporal_out = [&](const Mat& x) {
    Graph g;
    auto xv = g.input(x);
    auto pv = g.input(p0_tok);
    auto q = g.linear(xv, g.input(params.at("layer0.tm.q.W")), g.input(params.at("layer0.tm.q.b")));
    auto k = g.linear(xv, g.input(params.at("layer0.tm.k.W")), g.input(params.at("layer0.tm.k.b")));
    auto v = g.linear(xv, g.input(params.at("layer0.tm.v.W")), g.input(params.at("layer0.tm.v.b")));
    auto k0 = g.linear(pv, g.input(params.at("layer0.tm.k.W")), g.input(params.at("layer0.tm.k.b")));
    auto v0 = g.linear(pv, g.input(params.at("layer0.tm.v.W")), g.input(params.at("layer0.tm.v.b")));
    return Mat(g.value(g.temporal_attention(q, k, v, k0, v0, cfg.heads, f, n)));
  };

  Mat base_sp = spatial_out(x0);
  Mat base_tm = temporal_out(x0);

  // perturb every token of frame 1: frames 0 and 2 must be bit-identical
  Mat x_sp = x0;
  for (int p = 0; p < n; ++p) x_sp.row(1 * n + p).array() += 0.37;
  Mat out_sp = spatial_out(x_sp);
  for (int fr = 0; fr < f; ++fr)
    for (int p = 0; p < n; ++p) {
      if (fr == 1) continue;
      CHECK(out_sp.row(fr * n + p) == base_sp.row(fr * n + p));
    }
  CHECK((out_sp.middleRows(n, n) - base_sp.middleRows(n, n)).norm() > 0.0);

  // perturb point 2's track: every other point's track output unchanged
  Mat x_tm = x0;
  for (int fr = 0; fr < f; ++fr) x_tm.row(fr * n + 2).array() -= 0.21;
  Mat out_tm = temporal_out(x_tm);
  for (int fr = 0; fr < f; ++fr)
    for (int p = 0; p < n; ++p) {
      if (p == 2) continue;
      CHECK(out_tm.row(fr * n + p) == base_tm.row(fr * n + p));
    }
  CHECK((out_tm.row(2) - base_tm.row(2)).norm() > 0.0);
}

TEST_CASE("full network gradient check on a 2-layer d=8 model") {
  ModelConfig cfg = tiny_config();
  Rng rng(5);
  ParamStore params = init_params(cfg, rng);
  Mat noisy = random_mat(cfg.frames * cfg.points, 3, rng, 0.3);
  noisy.array() += 0.5;
  Mat p0 = random_mat(cfg.points, 3, rng, 0.1);
  p0.array() += 0.5;
  Mat feats = condition_features(demo_cond(), 50.0, cfg);
  Mat target = random_mat(cfg.frames * cfg.points, 3, rng, 0.3);
  target.array() += 0.5;
  const int t = 11;

  Graph g;
  BoundParams bound = bind_params(g, params, true);
  auto noisy_var = g.input(noisy, true);
  auto feats_var = g.input(feats, true);
  auto p0_var = g.input(p0);
  auto pred = forward_denoise(g, params, bound, cfg, noisy_var, t, feats_var, p0_var);
  auto loss = g.mse(pred, target);
  g.backward(loss);

  auto loss_with_params = [&](const ParamStore& ps, const Mat& noisy_in, const Mat& feats_in) {
    Graph g2;
    BoundParams b2 = bind_params(g2, ps, false);
    auto nv = g2.input(noisy_in);
    auto fv = g2.input(feats_in);
    auto pv = g2.input(p0);
    auto pr = forward_denoise(g2, ps, b2, cfg, nv, t, fv, pv);
    return g2.value(g2.mse(pr, target))(0, 0);
  };

  // every parameter tensor, finite-differenced entry by entry
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamStore probe = params;
    Mat& m = probe.entry(i).second;
    const Mat& analytic = g.grad_populated(bound.vars[i])
                              ? g.grad(bound.vars[i])
                              : Mat(Mat::Zero(m.rows(), m.cols()));
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        double keep = m(r, c);
        const double h = 1e-5;
        m(r, c) = keep + h;
        double hi = loss_with_params(probe, noisy, feats);
        m(r, c) = keep - h;
        double lo = loss_with_params(probe, noisy, feats);
        m(r, c) = keep;
        double fd = (hi - lo) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(analytic(r, c)), 1e-6});
        worst = std::max(worst, std::abs(fd - analytic(r, c)) / denom);
      }
    }
  }
  CHECK(worst < 1e-3);

  // input and condition-feature gradients too
  {
    std::vector<double> flat(noisy.data(), noisy.data() + noisy.size());
    auto fn = [&](const std::vector<double>& v) {
      Mat m(noisy.rows(), noisy.cols());
      std::copy(v.begin(), v.end(), m.data());
      return loss_with_params(params, m, feats);
    };
    std::vector<double> fd = finite_diff(fn, flat, 1e-6);
    std::vector<double> analytic(g.grad(noisy_var).data(),
                                 g.grad(noisy_var).data() + noisy.size());
    CHECK(max_grad_err(analytic, fd, 1e-6) < 1e-3);
  }
  {
    std::vector<double> flat(feats.data(), feats.data() + feats.size());
    auto fn = [&](const std::vector<double>& v) {
      Mat m(feats.rows(), feats.cols());
      std::copy(v.begin(), v.end(), m.data());
      return loss_with_params(params, noisy, m);
    };
    std::vector<double> fd = finite_diff(fn, flat, 1e-6);
    std::vector<double> analytic(g.grad(feats_var).data(),
                                 g.grad(feats_var).data() + feats.size());
    CHECK(max_grad_err(analytic, fd, 1e-6) < 1e-3);
  }
}

TEST_CASE("every parameter receives a nonzero gradient on a random batch") {
  ModelConfig cfg = tiny_config();
  Rng rng(6);
  ParamStore params = init_params(cfg, rng);
  Mat noisy = random_mat(cfg.frames * cfg.points, 3, rng);
  Mat p0 = random_mat(cfg.points, 3, rng);
  Mat feats = condition_features(demo_cond(), 50.0, cfg);
  Mat target = random_mat(cfg.frames * cfg.points, 3, rng);

  Graph g;
  BoundParams bound = bind_params(g, params, true);
  auto pred = forward_denoise(g, params, bound, cfg, g.input(noisy), 9, g.input(feats),
                              g.input(p0));
  g.backward(g.mse(pred, target));
  for (std::size_t i = 0; i < params.size(); ++i) {
    INFO("param ", params.entry(i).first);
    REQUIRE(g.grad_populated(bound.vars[i]));
    CHECK(g.grad(bound.vars[i]).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("oracle denoiser on noised input reaches zero diffusion loss") {
  // add_noise then an oracle that returns the clean signal: MSE is zero
  NoiseSchedule s(100);
  Rng rng(7);
  Mat x = random_mat(60, 3, rng);
  Mat eps = random_mat(60, 3, rng);
  Mat noised = s.add_noise(x, 37, eps);
  Mat oracle_prediction = x;  // by definition
  CHECK((oracle_prediction - x).squaredNorm() == 0.0);
  CHECK(noised.rows() == x.rows());
}

TEST_CASE("train: loss decreases on a tiny overfit and is seed-deterministic") {
  ModelConfig cfg = tiny_config();
  Rng rng(8);

  data::TrajectoryRecord rec;
  rec.cond = demo_cond();
  rec.object_weight = 40.0;
  rec.traj.frame_dt = 1.0 / 24;
  rec.traj.initial = random_cloud(cfg.points, rng);
  for (int f = 0; f < cfg.frames; ++f) {
    rec.traj.frames.push_back(random_cloud(cfg.points, rng).positions);
    rec.traj.def_grads.emplace_back(cfg.points, Mat3::Identity());
    rec.traj.affines.emplace_back(cfg.points, Mat3::Zero());
  }

  TrainConfig tcfg;
  tcfg.steps = 150;
  tcfg.batch_size = 1;
  tcfg.lr = 3e-3;
  tcfg.warmup_steps = 10;
  tcfg.seed = 11;
  tcfg.weights.physics = 0.0;  // keep the tiny test fast
  tcfg.loss_grid.resolution = 8;

  loss::GridConfig grid;
  grid.resolution = 8;
  std::vector<TrainSample> ds{prepare_sample(rec, cfg, grid)};
  TrainResult r1 = train(ds, cfg, tcfg);
  REQUIRE(static_cast<int>(r1.log.size()) == tcfg.steps);

  double early = 0.0, late = 0.0;
  for (int i = 0; i < 20; ++i) early += r1.log[i].total;
  for (int i = tcfg.steps - 20; i < tcfg.steps; ++i) late += r1.log[i].total;
  CHECK(late < 0.5 * early);

  TrainResult r2 = train(ds, cfg, tcfg);
  for (std::size_t i = 0; i < r1.params.size(); ++i)
    CHECK(r1.params.entry(i).second == r2.params.entry(i).second);

  // zero auxiliary weights match a pure-diffusion run bitwise
  TrainConfig zero = tcfg;
  zero.weights.velocity = 0.0;
  zero.weights.floor = 0.0;
  TrainResult rz1 = train(ds, cfg, zero);
  TrainResult rz2 = train(ds, cfg, zero);
  for (std::size_t i = 0; i < rz1.params.size(); ++i)
    CHECK(rz1.params.entry(i).second == rz2.params.entry(i).second);
  for (int i = 0; i < zero.steps; ++i) CHECK(rz1.log[i].total == doctest::Approx(rz1.log[i].diffusion));
}

TEST_CASE("ddim_sample: deterministic; one step equals the single-shot prediction") {
  ModelConfig cfg = tiny_config();
  Rng rng(9);
  ParamStore params = init_params(cfg, rng);
  PointCloud p0 = random_cloud(cfg.points, rng);
  PhysicsCondition cond = demo_cond();

  Rng s1(21), s2(21);
  TrajectorySequence a = ddim_sample(cfg, params, cond, 40.0, p0, 5, s1, 1.0 / 24);
  TrajectorySequence b = ddim_sample(cfg, params, cond, 40.0, p0, 5, s2, 1.0 / 24);
  REQUIRE(a.num_frames() == cfg.frames);
  for (int f = 0; f < cfg.frames; ++f)
    for (int p = 0; p < cfg.points; ++p) CHECK(a.frames[f][p] == b.frames[f][p]);

  // steps = 1: output is D(pure noise, T)
  Rng s3(33), s4(33);
  TrajectorySequence one = ddim_sample(cfg, params, cond, 40.0, p0, 1, s3, 1.0 / 24);
  Mat noise(cfg.frames * cfg.points, 3);
  for (Eigen::Index r = 0; r < noise.rows(); ++r)
    for (int c = 0; c < 3; ++c) noise(r, c) = s4.normal();
  Mat p0_mat(cfg.points, 3);
  for (int p = 0; p < cfg.points; ++p) p0_mat.row(p) = p0.positions[p].transpose();
  Graph g;
  BoundParams bound = bind_params(g, params, false);
  auto pred = forward_denoise(g, params, bound, cfg, g.input(noise), cfg.diffusion_steps,
                              g.input(condition_features(cond, 40.0, cfg)), g.input(p0_mat));
  const Mat& direct = g.value(pred);
  for (int f = 0; f < cfg.frames; ++f)
    for (int p = 0; p < cfg.points; ++p)
      CHECK((one.frames[f][p] - Vec3(direct.row(f * cfg.points + p).transpose())).norm() < 1e-12);
}

TEST_CASE("checkpoint: save/load round trip preserves config and f32 parameters") {
  TempDir dir("ckpt");
  ModelConfig cfg = tiny_config();
  Rng rng(10);
  ParamStore params = init_params(cfg, rng);
  std::string path = dir.file("model.pdmc");
  save_checkpoint(path, cfg, params);

  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.cfg.layers == cfg.layers);
  CHECK(ck.cfg.latent == cfg.latent);
  CHECK(ck.cfg.points == cfg.points);
  CHECK(ck.cfg.diffusion_steps == cfg.diffusion_steps);
  REQUIRE(ck.params.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(ck.params.entry(i).first == params.entry(i).first);
    const Mat& orig = params.entry(i).second;
    const Mat& back = ck.params.entry(i).second;
    for (int r = 0; r < orig.rows(); ++r)
      for (int c = 0; c < orig.cols(); ++c)
        CHECK(back(r, c) == doctest::Approx(orig(r, c)).epsilon(1e-6));
  }

  // a second save of the loaded params is bitwise identical (f32 idempotent)
  std::string path2 = dir.file("model2.pdmc");
  save_checkpoint(path2, ck.cfg, ck.params);
  CHECK(slurp(path) == slurp(path2));

  // corrupt magic
  auto bytes = slurp(path);
  bytes[0] = 'X';
  std::ofstream(dir.file("bad.pdmc"), std::ios::binary)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  try {
    load_checkpoint(dir.file("bad.pdmc"));
    FAIL("expected magic error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FormatMagic);
  }
}
