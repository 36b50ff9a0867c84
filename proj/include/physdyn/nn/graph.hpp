#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "physdyn/losses.hpp"

namespace physdyn::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Ground-truth side inputs of the physics loss, shared across graph builds.
struct PhysicsAux {
  Mat frame0;  // N x 3
  std::vector<std::vector<Mat3>> def_grads;
  std::vector<std::vector<Mat3>> affines;
  std::vector<double> masses;
  loss::GridConfig grid;
  double frame_dt = 1.0 / 24.0;
};

// Reverse-mode tape over row-major matrices. Nodes are created in
// topological order; backward() walks them in reverse. Scalars are 1x1.
class Graph {
 public:
  using Var = int;

  Var input(Mat value, bool requires_grad = false);

  const Mat& value(Var v) const { return nodes_[v].value; }
  const Mat& grad(Var v) const;
  bool grad_populated(Var v) const { return nodes_[v].grad_set; }
  bool requires_grad(Var v) const { return nodes_[v].rg; }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every reachable input
  // with requires_grad set.
  void backward(Var loss);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scaled(Var a, Var b, double s);  // a + s * b
  Var matmul(Var a, Var b);
  Var linear(Var x, Var w, Var b);  // x*W + row-broadcast b
  Var layer_norm(Var x);            // per-row, no affine
  Var modulate(Var x, Var gamma, Var beta);  // x * (1 + gamma) + beta, rowwise
  Var silu(Var x);
  Var gelu(Var x);
  Var slice_cols(Var x, int c0, int c1);
  Var row_broadcast_add(Var x, Var row);

  // Self-attention over each frame's point tokens with one extra
  // condition key/value; queries come from the point tokens only.
  Var spatial_attention(Var q, Var k, Var v, Var cond_k, Var cond_v, int heads, int frames,
                        int points);

  // Self-attention over each point's track; the frame-0 key/value comes
  // from the input-cloud tokens, queries from the trajectory tokens only.
  Var temporal_attention(Var q, Var k, Var v, Var p0_k, Var p0_v, int heads, int frames,
                         int points);

  // losses (scalars)
  Var mse(Var pred, Mat target);
  Var velocity_loss(Var pred, Mat target, int frames, int points);
  Var floor_loss(Var pred, double floor_height, int frames, int points);
  Var physics_loss(Var pred, std::shared_ptr<const PhysicsAux> aux, int frames, int points);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool rg = false;
    bool grad_set = false;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  Mat& grad_buffer(Var v);
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    if (!nodes_[v].rg) return;
    Mat& buf = grad_buffer(v);
    buf += g;
  }
  Var make(Mat value, bool rg, std::function<void()> back);
};

}  // namespace physdyn::nn
