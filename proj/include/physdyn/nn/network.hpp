#pragma once

#include <string>
#include <vector>

#include "physdyn/nn/graph.hpp"
#include "physdyn/nn/schedule.hpp"
#include "physdyn/point_cloud.hpp"
#include "physdyn/rng.hpp"

namespace physdyn::nn {

struct ModelConfig {
  int layers = 4;
  int latent = 64;
  int heads = 4;
  int cond_dim = 64;
  int mlp_ratio = 4;
  int points = 64;
  int frames = 8;
  int diffusion_steps = 1000;
  // condition standardization ranges
  double e_log_min = 4.0, e_log_max = 7.0;
  double nu_min = 0.05, nu_max = 0.45;

  void validate() const;
};

// Named parameter tensors in a stable order (checkpoint layout order).
class ParamStore {
 public:
  Mat& add(const std::string& name, Mat value);
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  const std::pair<std::string, Mat>& entry(std::size_t i) const { return entries_[i]; }
  std::pair<std::string, Mat>& entry(std::size_t i) { return entries_[i]; }

 private:
  std::vector<std::pair<std::string, Mat>> entries_;
};

ParamStore init_params(const ModelConfig& cfg, Rng& rng);

// 13 standardized inputs: force/G, drag point, log-E, nu, floor height
// (all mapped to about [-1, 1]) and the material one-hot.
constexpr int kConditionFeatures = 13;
Mat condition_features(const PhysicsCondition& cond, double object_weight,
                       const ModelConfig& cfg);

// Standalone 2-layer condition embedding (1 x cond_dim).
Mat embed_condition(const PhysicsCondition& cond, double object_weight, const ParamStore& params,
                    const ModelConfig& cfg);

// Parameter ids registered into a graph for one forward/backward build.
struct BoundParams {
  std::vector<Graph::Var> vars;           // aligned with ParamStore order
  Graph::Var at(const ParamStore& store, const std::string& name) const;
};
BoundParams bind_params(Graph& g, const ParamStore& params, bool requires_grad);

// Full denoiser: noisy trajectory tokens + P0 tokens + condition token
// through `layers` blocks of spatial attention, temporal attention and a
// pointwise feed-forward, AdaLN-modulated by the diffusion-step embedding.
// Returns the predicted clean trajectory (frames*points x 3).
Graph::Var forward_denoise(Graph& g, const ParamStore& store, const BoundParams& bound,
                           const ModelConfig& cfg, Graph::Var noisy, int t,
                           Graph::Var cond_features, Graph::Var p0);

// Fixed sinusoidal tables.
Mat sinusoid_rows(int count, int dim, double base = 10000.0);
Mat sinusoid_position(double value, int dim, double base = 10000.0);

}  // namespace physdyn::nn
