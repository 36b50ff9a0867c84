#include "physdyn/nn/network.hpp"

#include <cmath>

namespace physdyn::nn {

void ModelConfig::validate() const {
  require(layers >= 1 && latent >= 2 && heads >= 1, Errc::ConfigError,
          "model: layers/latent/heads must be positive");
  require(latent % heads == 0, Errc::ConfigError, "model: latent must be divisible by heads");
  require(cond_dim >= 1 && mlp_ratio >= 1, Errc::ConfigError,
          "model: cond_dim and mlp_ratio must be positive");
  require(points >= 1 && frames >= 1, Errc::ConfigError, "model: points/frames must be positive");
  require(diffusion_steps >= 1, Errc::ConfigError, "model: diffusion_steps must be positive");
  require(e_log_max > e_log_min, Errc::ConfigError, "model: bad E range");
  require(nu_max > nu_min, Errc::ConfigError, "model: bad nu range");
}

Mat& ParamStore::add(const std::string& name, Mat value) {
  require(!contains(name), Errc::InvalidArgument, "ParamStore: duplicate " + name);
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

Mat& ParamStore::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.first == name) return e.second;
  fail(Errc::InvalidArgument, "ParamStore: missing " + name);
}

const Mat& ParamStore::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  fail(Errc::InvalidArgument, "ParamStore: missing " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

namespace {

Mat xavier(int rows, int cols, Rng& rng) {
  double std_dev = std::sqrt(2.0 / (rows + cols));
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = std_dev * rng.normal();
  return m;
}

void add_linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                bool zero = false) {
  store.add(prefix + ".W", zero ? Mat(Mat::Zero(in, out)) : xavier(in, out, rng));
  store.add(prefix + ".b", Mat::Zero(1, out));
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore store;
  int d = cfg.latent;
  int dc = cfg.cond_dim;
  int m = cfg.mlp_ratio * d;

  add_linear(store, "embed", 3, d, rng);
  add_linear(store, "cond.l1", kConditionFeatures, dc, rng);
  add_linear(store, "cond.l2", dc, dc, rng);
  add_linear(store, "cond.proj", dc, d, rng);
  add_linear(store, "step.l1", d, d, rng);
  add_linear(store, "step.l2", d, d, rng);

  for (int l = 0; l < cfg.layers; ++l) {
    std::string p = "layer" + std::to_string(l);
    // AdaLN modulation weights start at zero: blocks begin as plain layer norm
    add_linear(store, p + ".sp.mod", d, 2 * d, rng, true);
    add_linear(store, p + ".sp.cmod", d, 2 * d, rng, true);
    add_linear(store, p + ".sp.q", d, d, rng);
    add_linear(store, p + ".sp.k", d, d, rng);
    add_linear(store, p + ".sp.v", d, d, rng);
    add_linear(store, p + ".sp.o", d, d, rng);
    add_linear(store, p + ".tm.mod", d, 2 * d, rng, true);
    add_linear(store, p + ".tm.q", d, d, rng);
    add_linear(store, p + ".tm.k", d, d, rng);
    add_linear(store, p + ".tm.v", d, d, rng);
    add_linear(store, p + ".tm.o", d, d, rng);
    add_linear(store, p + ".ff.mod", d, 2 * d, rng, true);
    add_linear(store, p + ".ff.l1", d, m, rng);
    add_linear(store, p + ".ff.l2", m, d, rng);
  }
  add_linear(store, "head", d, 3, rng);
  return store;
}

Mat condition_features(const PhysicsCondition& cond, double object_weight,
                       const ModelConfig& cfg) {
  Mat f = Mat::Zero(1, kConditionFeatures);
  double g = object_weight > 0.0 ? object_weight : 1.0;
  f(0, 0) = cond.force.x() / g;
  f(0, 1) = cond.force.y() / g;
  f(0, 2) = cond.force.z() / g;
  f(0, 3) = 2.0 * (cond.drag_point.x() - 0.5);
  f(0, 4) = 2.0 * (cond.drag_point.y() - 0.5);
  f(0, 5) = 2.0 * (cond.drag_point.z() - 0.5);
  double log_e = std::log10(cond.youngs_modulus);
  f(0, 6) = 2.0 * (log_e - cfg.e_log_min) / (cfg.e_log_max - cfg.e_log_min) - 1.0;
  f(0, 7) = 2.0 * (cond.poisson_ratio - cfg.nu_min) / (cfg.nu_max - cfg.nu_min) - 1.0;
  f(0, 8) = 2.0 * (cond.floor_height - 0.5);
  f(0, 9 + static_cast<int>(cond.material)) = 1.0;
  return f;
}

Mat embed_condition(const PhysicsCondition& cond, double object_weight, const ParamStore& params,
                    const ModelConfig& cfg) {
  Graph g;
  auto feats = g.input(condition_features(cond, object_weight, cfg));
  auto w1 = g.input(params.at("cond.l1.W"));
  auto b1 = g.input(params.at("cond.l1.b"));
  auto w2 = g.input(params.at("cond.l2.W"));
  auto b2 = g.input(params.at("cond.l2.b"));
  auto out = g.linear(g.silu(g.linear(feats, w1, b1)), w2, b2);
  return g.value(out);
}

BoundParams bind_params(Graph& g, const ParamStore& params, bool requires_grad) {
  BoundParams bound;
  bound.vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    bound.vars.push_back(g.input(params.entry(i).second, requires_grad));
  return bound;
}

Graph::Var BoundParams::at(const ParamStore& store, const std::string& name) const {
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store.entry(i).first == name) return vars[i];
  fail(Errc::InvalidArgument, "BoundParams: missing " + name);
}

Mat sinusoid_rows(int count, int dim, double base) {
  Mat out(count, dim);
  for (int pos = 0; pos < count; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      double freq = std::pow(base, -static_cast<double>(i) / dim);
      out(pos, i) = std::sin(pos * freq);
      if (i + 1 < dim) out(pos, i + 1) = std::cos(pos * freq);
    }
  }
  return out;
}

Mat sinusoid_position(double value, int dim, double base) {
  Mat out(1, dim);
  for (int i = 0; i < dim; i += 2) {
    double freq = std::pow(base, -static_cast<double>(i) / dim);
    out(0, i) = std::sin(value * freq);
    if (i + 1 < dim) out(0, i + 1) = std::cos(value * freq);
  }
  return out;
}

namespace {

struct BlockCtx {
  Graph& g;
  const ParamStore& store;
  const BoundParams& bound;
  const ModelConfig& cfg;
  Graph::Var step_emb;

  Graph::Var param(const std::string& name) const { return bound.at(store, name); }

  Graph::Var lin(Graph::Var x, const std::string& prefix) const {
    return g.linear(x, param(prefix + ".W"), param(prefix + ".b"));
  }

  // AdaLN: gamma/beta from the step embedding through a per-sublayer linear
  Graph::Var adaln(Graph::Var x, const std::string& prefix) const {
    auto mod = lin(step_emb, prefix);
    int d = cfg.latent;
    return g.modulate(g.layer_norm(x), g.slice_cols(mod, 0, d), g.slice_cols(mod, d, 2 * d));
  }
};

}  // namespace

Graph::Var forward_denoise(Graph& g, const ParamStore& store, const BoundParams& bound,
                           const ModelConfig& cfg, Graph::Var noisy, int t,
                           Graph::Var cond_features, Graph::Var p0) {
  cfg.validate();
  int n = cfg.points, f = cfg.frames, d = cfg.latent;
  require(g.value(noisy).rows() == static_cast<Eigen::Index>(f) * n &&
              g.value(noisy).cols() == 3,
          Errc::ShapeMismatch, "forward_denoise: noisy trajectory shape mismatch");
  require(g.value(p0).rows() == n && g.value(p0).cols() == 3, Errc::ShapeMismatch,
          "forward_denoise: P0 shape mismatch");
  require(t >= 0 && t <= cfg.diffusion_steps, Errc::InvalidArgument,
          "forward_denoise: diffusion step out of range");

  BlockCtx ctx{g, store, bound, cfg, 0};

  // diffusion-step embedding
  auto t_sin = g.input(sinusoid_position(static_cast<double>(t), d));
  ctx.step_emb = ctx.lin(g.silu(ctx.lin(t_sin, "step.l1")), "step.l2");

  // condition token: 2-layer MLP then projection into the latent width
  auto cond_emb = ctx.lin(g.silu(ctx.lin(cond_features, "cond.l1")), "cond.l2");
  auto cond_tok = g.add(ctx.lin(cond_emb, "cond.proj"), ctx.step_emb);

  // positional embeddings over point index (space) and frame index (time)
  Mat pe_space = sinusoid_rows(n, d);
  Mat pe_time = sinusoid_rows(f + 1, d);
  Mat pe_tokens(static_cast<Eigen::Index>(f) * n, d);
  for (int fr = 0; fr < f; ++fr)
    for (int p = 0; p < n; ++p)
      pe_tokens.row(static_cast<Eigen::Index>(fr) * n + p) = pe_space.row(p) + pe_time.row(fr + 1);
  Mat pe_p0(n, d);
  for (int p = 0; p < n; ++p) pe_p0.row(p) = pe_space.row(p) + pe_time.row(0);

  auto tokens = ctx.lin(noisy, "embed");
  tokens = g.add(tokens, g.input(std::move(pe_tokens)));
  tokens = g.row_broadcast_add(tokens, ctx.step_emb);

  auto p0_tokens = ctx.lin(p0, "embed");
  p0_tokens = g.add(p0_tokens, g.input(std::move(pe_p0)));
  p0_tokens = g.row_broadcast_add(p0_tokens, ctx.step_emb);

  for (int l = 0; l < cfg.layers; ++l) {
    std::string pfx = "layer" + std::to_string(l);

    // spatial attention over each frame's points plus the condition token
    {
      auto xn = ctx.adaln(tokens, pfx + ".sp.mod");
      auto cn = ctx.adaln(cond_tok, pfx + ".sp.cmod");
      auto q = ctx.lin(xn, pfx + ".sp.q");
      auto k = ctx.lin(xn, pfx + ".sp.k");
      auto v = ctx.lin(xn, pfx + ".sp.v");
      auto ck = ctx.lin(cn, pfx + ".sp.k");
      auto cv = ctx.lin(cn, pfx + ".sp.v");
      auto att = g.spatial_attention(q, k, v, ck, cv, cfg.heads, f, n);
      tokens = g.add(tokens, ctx.lin(att, pfx + ".sp.o"));
    }

    // temporal attention over each point's track including the frame-0 token
    {
      auto xn = ctx.adaln(tokens, pfx + ".tm.mod");
      auto pn = ctx.adaln(p0_tokens, pfx + ".tm.mod");
      auto q = ctx.lin(xn, pfx + ".tm.q");
      auto k = ctx.lin(xn, pfx + ".tm.k");
      auto v = ctx.lin(xn, pfx + ".tm.v");
      auto k0 = ctx.lin(pn, pfx + ".tm.k");
      auto v0 = ctx.lin(pn, pfx + ".tm.v");
      auto att = g.temporal_attention(q, k, v, k0, v0, cfg.heads, f, n);
      tokens = g.add(tokens, ctx.lin(att, pfx + ".tm.o"));
    }

    // pointwise feed-forward
    {
      auto xn = ctx.adaln(tokens, pfx + ".ff.mod");
      auto h = g.gelu(ctx.lin(xn, pfx + ".ff.l1"));
      tokens = g.add(tokens, ctx.lin(h, pfx + ".ff.l2"));
    }
  }

  return ctx.lin(g.layer_norm(tokens), "head");
}

}  // namespace physdyn::nn
