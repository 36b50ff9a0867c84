#include "physdyn/nn/graph.hpp"

#include <cmath>

#include "physdyn/common.hpp"

namespace physdyn::nn {

namespace {

constexpr double kLnEps = 1e-6;

// row-partitioned GEMM; each output row is produced by exactly one worker,
// so the result is independent of the thread count
template <typename A, typename B>
Mat pmatmul(const A& a, const B& b) {
  Mat out(a.rows(), b.cols());
  if (a.rows() >= 128) {
    parallel_for(a.rows(), [&](std::int64_t lo, std::int64_t hi) {
      out.middleRows(lo, hi - lo).noalias() = a.middleRows(lo, hi - lo) * b;
    });
  } else {
    out.noalias() = a * b;
  }
  return out;
}

template <typename A, typename B>
void pmatmul_add(Mat& dst, const A& a, const B& b) {
  if (a.rows() >= 128) {
    parallel_for(a.rows(), [&](std::int64_t lo, std::int64_t hi) {
      dst.middleRows(lo, hi - lo).noalias() += a.middleRows(lo, hi - lo) * b;
    });
  } else {
    dst.noalias() += a * b;
  }
}

void softmax_rows(Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// dS = A .* (dA - rowsum(dA .* A))
Mat softmax_backward(const Mat& a, const Mat& da) {
  Mat ds = da;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double dot = a.row(r).dot(da.row(r));
    ds.row(r) = a.row(r).array() * (da.row(r).array() - dot);
  }
  return ds;
}

}  // namespace

Graph::Var Graph::input(Mat value, bool requires_grad) {
  return make(std::move(value), requires_grad, nullptr);
}

Graph::Var Graph::make(Mat value, bool rg, std::function<void()> back) {
  nodes_.push_back(Node{std::move(value), Mat(), rg, false, std::move(back)});
  return static_cast<Var>(nodes_.size() - 1);
}

Mat& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v];
  if (!n.grad_set) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad_set = true;
  }
  return n.grad;
}

const Mat& Graph::grad(Var v) const {
  require(nodes_[v].grad_set, Errc::InvalidArgument, "graph: gradient not populated");
  return nodes_[v].grad;
}

void Graph::backward(Var loss) {
  require(nodes_[loss].value.size() == 1, Errc::InvalidArgument,
          "graph: backward needs a scalar loss");
  grad_buffer(loss)(0, 0) = 1.0;
  for (Var v = loss; v >= 0; --v) {
    Node& n = nodes_[v];
    if (n.grad_set && n.back) n.back();
  }
}

Graph::Var Graph::add(Var a, Var b) {
  Mat y = value(a) + value(b);
  bool rg = nodes_[a].rg || nodes_[b].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, a, b, out] {
      const Mat& g = nodes_[out].grad;
      accumulate(a, g);
      accumulate(b, g);
    };
  return out;
}

Graph::Var Graph::sub(Var a, Var b) {
  Mat y = value(a) - value(b);
  bool rg = nodes_[a].rg || nodes_[b].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, a, b, out] {
      const Mat& g = nodes_[out].grad;
      accumulate(a, g);
      accumulate(b, -g);
    };
  return out;
}

Graph::Var Graph::scale(Var a, double s) {
  Mat y = s * value(a);
  bool rg = nodes_[a].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, a, s, out] { accumulate(a, s * nodes_[out].grad); };
  return out;
}

Graph::Var Graph::add_scaled(Var a, Var b, double s) {
  Mat y = value(a) + s * value(b);
  bool rg = nodes_[a].rg || nodes_[b].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, a, b, s, out] {
      const Mat& g = nodes_[out].grad;
      accumulate(a, g);
      accumulate(b, s * g);
    };
  return out;
}

Graph::Var Graph::matmul(Var a, Var b) {
  Mat y = pmatmul(value(a), value(b));
  bool rg = nodes_[a].rg || nodes_[b].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, a, b, out] {
      const Mat& g = nodes_[out].grad;
      if (nodes_[a].rg) pmatmul_add(grad_buffer(a), g, value(b).transpose());
      if (nodes_[b].rg) pmatmul_add(grad_buffer(b), value(a).transpose(), g);
    };
  return out;
}

Graph::Var Graph::linear(Var x, Var w, Var b) {
  require(value(b).rows() == 1 && value(b).cols() == value(w).cols(), Errc::ShapeMismatch,
          "linear: bias must be a 1 x out row");
  Mat y = pmatmul(value(x), value(w));
  y.rowwise() += value(b).row(0);
  bool rg = nodes_[x].rg || nodes_[w].rg || nodes_[b].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, x, w, b, out] {
      const Mat& g = nodes_[out].grad;
      if (nodes_[x].rg) pmatmul_add(grad_buffer(x), g, value(w).transpose());
      if (nodes_[w].rg) pmatmul_add(grad_buffer(w), value(x).transpose(), g);
      if (nodes_[b].rg) grad_buffer(b).row(0) += g.colwise().sum();
    };
  return out;
}

Graph::Var Graph::layer_norm(Var x) {
  const Mat& v = value(x);
  auto y = std::make_shared<Mat>(v.rows(), v.cols());
  auto rstd = std::make_shared<Eigen::VectorXd>(v.rows());
  double d = static_cast<double>(v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    double mu = v.row(r).mean();
    double var = (v.row(r).array() - mu).square().sum() / d;
    double rs = 1.0 / std::sqrt(var + kLnEps);
    (*rstd)(r) = rs;
    y->row(r) = (v.row(r).array() - mu) * rs;
  }
  bool rg = nodes_[x].rg;
  Var out = make(*y, rg, nullptr);
  if (rg)
    nodes_[out].back = [this, x, out, y, rstd] {
      const Mat& g = nodes_[out].grad;
      Mat dx(g.rows(), g.cols());
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        double m1 = g.row(r).mean();
        double m2 = (g.row(r).array() * y->row(r).array()).mean();
        dx.row(r) = (*rstd)(r) * (g.row(r).array() - m1 - y->row(r).array() * m2);
      }
      accumulate(x, dx);
    };
  return out;
}

Graph::Var Graph::modulate(Var x, Var gamma, Var beta) {
  const Mat& v = value(x);
  require(value(gamma).rows() == 1 && value(gamma).cols() == v.cols() &&
              value(beta).rows() == 1 && value(beta).cols() == v.cols(),
          Errc::ShapeMismatch, "modulate: gamma/beta must be 1 x d rows");
  Mat y = v.array().rowwise() * (1.0 + value(gamma).row(0).array());
  y.rowwise() += value(beta).row(0);
  bool rg = nodes_[x].rg || nodes_[gamma].rg || nodes_[beta].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, x, gamma, beta, out] {
      const Mat& g = nodes_[out].grad;
      if (nodes_[x].rg)
        accumulate(x, (g.array().rowwise() * (1.0 + value(gamma).row(0).array())).matrix());
      if (nodes_[gamma].rg)
        grad_buffer(gamma).row(0) += (g.array() * value(x).array()).colwise().sum().matrix();
      if (nodes_[beta].rg) grad_buffer(beta).row(0) += g.colwise().sum();
    };
  return out;
}

Graph::Var Graph::silu(Var x) {
  const Mat& v = value(x);
  Mat s = (1.0 + (-v.array()).exp()).inverse();
  Mat y = v.array() * s.array();
  bool rg = nodes_[x].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg) {
    auto sig = std::make_shared<Mat>(std::move(s));
    nodes_[out].back = [this, x, out, sig] {
      const Mat& g = nodes_[out].grad;
      accumulate(
          x,
          (g.array() * sig->array() * (1.0 + value(x).array() * (1.0 - sig->array()))).matrix());
    };
  }
  return out;
}

Graph::Var Graph::gelu(Var x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  const Mat& v = value(x);
  Mat t = (c * (v.array() + a * v.array().cube())).tanh();
  Mat y = 0.5 * v.array() * (1.0 + t.array());
  bool rg = nodes_[x].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg) {
    auto th = std::make_shared<Mat>(std::move(t));
    nodes_[out].back = [this, x, out, th] {
      constexpr double cc = 0.7978845608028654;
      constexpr double aa = 0.044715;
      const Mat& g = nodes_[out].grad;
      auto xv = value(x).array();
      auto sech2 = 1.0 - th->array().square();
      auto dy =
          0.5 * (1.0 + th->array()) + 0.5 * xv * sech2 * cc * (1.0 + 3.0 * aa * xv.square());
      accumulate(x, (g.array() * dy).matrix());
    };
  }
  return out;
}

Graph::Var Graph::slice_cols(Var x, int c0, int c1) {
  const Mat& v = value(x);
  require(c0 >= 0 && c1 <= v.cols() && c0 < c1, Errc::ShapeMismatch, "slice_cols: bad range");
  Mat y = v.middleCols(c0, c1 - c0);
  bool rg = nodes_[x].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, x, out, c0, c1] {
      grad_buffer(x).middleCols(c0, c1 - c0) += nodes_[out].grad;
    };
  return out;
}

Graph::Var Graph::row_broadcast_add(Var x, Var row) {
  const Mat& v = value(x);
  require(value(row).rows() == 1 && value(row).cols() == v.cols(), Errc::ShapeMismatch,
          "row_broadcast_add: operand must be 1 x d");
  Mat y = v;
  y.rowwise() += value(row).row(0);
  bool rg = nodes_[x].rg || nodes_[row].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, x, row, out] {
      const Mat& g = nodes_[out].grad;
      accumulate(x, g);
      if (nodes_[row].rg) grad_buffer(row).row(0) += g.colwise().sum();
    };
  return out;
}

Graph::Var Graph::spatial_attention(Var q, Var k, Var v, Var cond_k, Var cond_v, int heads,
                                    int frames, int points) {
  const Mat& qv = value(q);
  int d = static_cast<int>(qv.cols());
  require(d % heads == 0, Errc::ShapeMismatch, "spatial_attention: dim not divisible by heads");
  require(qv.rows() == static_cast<Eigen::Index>(frames) * points, Errc::ShapeMismatch,
          "spatial_attention: token count mismatch");
  int dh = d / heads;
  double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  auto attn = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(frames) * heads);
  Mat out_val(qv.rows(), d);
  {
    const Mat& kv = value(k);
    const Mat& vv = value(v);
    const Mat& ckv = value(cond_k);
    const Mat& cvv = value(cond_v);
    parallel_for(frames, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t f = lo; f < hi; ++f) {
        for (int h = 0; h < heads; ++h) {
          auto qb = qv.block(f * points, h * dh, points, dh);
          auto kb = kv.block(f * points, h * dh, points, dh);
          auto vb = vv.block(f * points, h * dh, points, dh);
          Mat a(points, points + 1);
          a.leftCols(points).noalias() = qb * kb.transpose();
          a.col(points).noalias() = qb * ckv.block(0, h * dh, 1, dh).transpose();
          a *= att_scale;
          softmax_rows(a);
          out_val.block(f * points, h * dh, points, dh).noalias() =
              a.leftCols(points) * vb + a.col(points) * cvv.block(0, h * dh, 1, dh);
          (*attn)[f * heads + h] = std::move(a);
        }
      }
    });
  }

  bool rg = nodes_[q].rg || nodes_[k].rg || nodes_[v].rg || nodes_[cond_k].rg ||
            nodes_[cond_v].rg;
  Var out = make(std::move(out_val), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, q, k, v, cond_k, cond_v, heads, frames, points, dh, att_scale,
                        attn, out] {
      const Mat& g = nodes_[out].grad;
      const Mat& qv2 = value(q);
      const Mat& kv2 = value(k);
      const Mat& vv2 = value(v);
      const Mat& ckv = value(cond_k);
      const Mat& cvv = value(cond_v);
      Mat* gq = nodes_[q].rg ? &grad_buffer(q) : nullptr;
      Mat* gk = nodes_[k].rg ? &grad_buffer(k) : nullptr;
      Mat* gv = nodes_[v].rg ? &grad_buffer(v) : nullptr;
      int d = dh * heads;
      // per-frame condition-grad buffers, reduced in frame order afterwards
      std::vector<Mat> gck(frames, Mat::Zero(1, d)), gcv(frames, Mat::Zero(1, d));
      parallel_for(frames, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t f = lo; f < hi; ++f) {
          for (int h = 0; h < heads; ++h) {
            const Mat& a = (*attn)[f * heads + h];
            auto gb = g.block(f * points, h * dh, points, dh);
            auto qb = qv2.block(f * points, h * dh, points, dh);
            auto kb = kv2.block(f * points, h * dh, points, dh);
            auto vb = vv2.block(f * points, h * dh, points, dh);
            Mat da(points, points + 1);
            da.leftCols(points).noalias() = gb * vb.transpose();
            da.col(points).noalias() = gb * cvv.block(0, h * dh, 1, dh).transpose();
            if (gv) gv->block(f * points, h * dh, points, dh).noalias() +=
                a.leftCols(points).transpose() * gb;
            gcv[f].block(0, h * dh, 1, dh).noalias() += a.col(points).transpose() * gb;
            Mat ds = softmax_backward(a, da);
            ds *= att_scale;
            if (gq) gq->block(f * points, h * dh, points, dh).noalias() +=
                ds.leftCols(points) * kb + ds.col(points) * ckv.block(0, h * dh, 1, dh);
            if (gk) gk->block(f * points, h * dh, points, dh).noalias() +=
                ds.leftCols(points).transpose() * qb;
            gck[f].block(0, h * dh, 1, dh).noalias() += ds.col(points).transpose() * qb;
          }
        }
      });
      if (nodes_[cond_k].rg) {
        Mat& dst = grad_buffer(cond_k);
        for (int f = 0; f < frames; ++f) dst += gck[f];
      }
      if (nodes_[cond_v].rg) {
        Mat& dst = grad_buffer(cond_v);
        for (int f = 0; f < frames; ++f) dst += gcv[f];
      }
    };
  return out;
}

Graph::Var Graph::temporal_attention(Var q, Var k, Var v, Var p0_k, Var p0_v, int heads,
                                     int frames, int points) {
  const Mat& qv = value(q);
  int d = static_cast<int>(qv.cols());
  require(d % heads == 0, Errc::ShapeMismatch, "temporal_attention: dim not divisible by heads");
  require(qv.rows() == static_cast<Eigen::Index>(frames) * points, Errc::ShapeMismatch,
          "temporal_attention: token count mismatch");
  require(value(p0_k).rows() == points && value(p0_v).rows() == points, Errc::ShapeMismatch,
          "temporal_attention: p0 token count mismatch");
  int dh = d / heads;
  double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  auto attn = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(points) * heads);
  Mat out_val(qv.rows(), d);
  {
    const Mat& kv = value(k);
    const Mat& vv = value(v);
    const Mat& k0 = value(p0_k);
    const Mat& v0 = value(p0_v);
    parallel_for(points, [&](std::int64_t lo, std::int64_t hi) {
      Mat qp(frames, dh), keys(frames + 1, dh), vals(frames + 1, dh);
      for (std::int64_t p = lo; p < hi; ++p) {
        for (int h = 0; h < heads; ++h) {
          keys.row(0) = k0.block(p, h * dh, 1, dh);
          vals.row(0) = v0.block(p, h * dh, 1, dh);
          for (int f = 0; f < frames; ++f) {
            qp.row(f) = qv.block(f * points + p, h * dh, 1, dh);
            keys.row(f + 1) = kv.block(f * points + p, h * dh, 1, dh);
            vals.row(f + 1) = vv.block(f * points + p, h * dh, 1, dh);
          }
          Mat a = qp * keys.transpose();
          a *= att_scale;
          softmax_rows(a);
          Mat ob = a * vals;
          for (int f = 0; f < frames; ++f)
            out_val.block(f * points + p, h * dh, 1, dh) = ob.row(f);
          (*attn)[p * heads + h] = std::move(a);
        }
      }
    });
  }

  bool rg = nodes_[q].rg || nodes_[k].rg || nodes_[v].rg || nodes_[p0_k].rg || nodes_[p0_v].rg;
  Var out = make(std::move(out_val), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, q, k, v, p0_k, p0_v, heads, frames, points, dh, att_scale, attn,
                        out] {
      const Mat& g = nodes_[out].grad;
      const Mat& qv2 = value(q);
      const Mat& kv2 = value(k);
      const Mat& vv2 = value(v);
      const Mat& k0 = value(p0_k);
      const Mat& v0 = value(p0_v);
      Mat* gq = nodes_[q].rg ? &grad_buffer(q) : nullptr;
      Mat* gk = nodes_[k].rg ? &grad_buffer(k) : nullptr;
      Mat* gv = nodes_[v].rg ? &grad_buffer(v) : nullptr;
      Mat* gk0 = nodes_[p0_k].rg ? &grad_buffer(p0_k) : nullptr;
      Mat* gv0 = nodes_[p0_v].rg ? &grad_buffer(p0_v) : nullptr;
      parallel_for(points, [&](std::int64_t lo, std::int64_t hi) {
        Mat qp(frames, dh), keys(frames + 1, dh), vals(frames + 1, dh), gb(frames, dh);
        for (std::int64_t p = lo; p < hi; ++p) {
          for (int h = 0; h < heads; ++h) {
            const Mat& a = (*attn)[p * heads + h];
            keys.row(0) = k0.block(p, h * dh, 1, dh);
            vals.row(0) = v0.block(p, h * dh, 1, dh);
            for (int f = 0; f < frames; ++f) {
              qp.row(f) = qv2.block(f * points + p, h * dh, 1, dh);
              keys.row(f + 1) = kv2.block(f * points + p, h * dh, 1, dh);
              vals.row(f + 1) = vv2.block(f * points + p, h * dh, 1, dh);
              gb.row(f) = g.block(f * points + p, h * dh, 1, dh);
            }
            Mat da = gb * vals.transpose();          // F x (F+1)
            Mat dvals = a.transpose() * gb;          // (F+1) x dh
            Mat ds = softmax_backward(a, da);
            ds *= att_scale;
            Mat dqp = ds * keys;                     // F x dh
            Mat dkeys = ds.transpose() * qp;         // (F+1) x dh
            if (gv0) gv0->block(p, h * dh, 1, dh) += dvals.row(0);
            if (gk0) gk0->block(p, h * dh, 1, dh) += dkeys.row(0);
            for (int f = 0; f < frames; ++f) {
              if (gq) gq->block(f * points + p, h * dh, 1, dh) += dqp.row(f);
              if (gk) gk->block(f * points + p, h * dh, 1, dh) += dkeys.row(f + 1);
              if (gv) gv->block(f * points + p, h * dh, 1, dh) += dvals.row(f + 1);
            }
          }
        }
      });
    };
  return out;
}

Graph::Var Graph::mse(Var pred, Mat target) {
  const Mat& p = value(pred);
  require(p.rows() == target.rows() && p.cols() == target.cols(), Errc::ShapeMismatch,
          "mse: shape mismatch");
  double count = static_cast<double>(p.size());
  Mat y(1, 1);
  y(0, 0) = (p - target).squaredNorm() / count;
  bool rg = nodes_[pred].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg) {
    auto tgt = std::make_shared<Mat>(std::move(target));
    nodes_[out].back = [this, pred, out, tgt, count] {
      double up = nodes_[out].grad(0, 0);
      accumulate(pred, (2.0 * up / count) * (value(pred) - *tgt));
    };
  }
  return out;
}

Graph::Var Graph::velocity_loss(Var pred, Mat target, int frames, int points) {
  const Mat& p = value(pred);
  require(p.rows() == static_cast<Eigen::Index>(frames) * points && p.cols() == 3,
          Errc::ShapeMismatch, "velocity_loss: shape mismatch");
  Mat y(1, 1);
  y(0, 0) = loss::velocity_loss(p.data(), target.data(), frames, points);
  bool rg = nodes_[pred].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg) {
    auto tgt = std::make_shared<Mat>(std::move(target));
    nodes_[out].back = [this, pred, out, tgt, frames, points] {
      Mat g = Mat::Zero(static_cast<Eigen::Index>(frames) * points, 3);
      loss::velocity_loss_grad(value(pred).data(), tgt->data(), frames, points,
                               nodes_[out].grad(0, 0), g.data());
      accumulate(pred, g);
    };
  }
  return out;
}

Graph::Var Graph::floor_loss(Var pred, double floor_height, int frames, int points) {
  const Mat& p = value(pred);
  Mat y(1, 1);
  y(0, 0) = loss::floor_loss(p.data(), frames, points, floor_height);
  bool rg = nodes_[pred].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, pred, out, floor_height, frames, points] {
      Mat g = Mat::Zero(static_cast<Eigen::Index>(frames) * points, 3);
      loss::floor_loss_grad(value(pred).data(), frames, points, floor_height,
                            nodes_[out].grad(0, 0), g.data());
      accumulate(pred, g);
    };
  return out;
}

Graph::Var Graph::physics_loss(Var pred, std::shared_ptr<const PhysicsAux> aux, int frames,
                               int points) {
  const Mat& p = value(pred);
  require(p.rows() == static_cast<Eigen::Index>(frames) * points && p.cols() == 3,
          Errc::ShapeMismatch, "physics_loss: shape mismatch");
  require(aux->frame0.rows() == points, Errc::ShapeMismatch, "physics_loss: frame0 mismatch");
  auto full = std::make_shared<Mat>(static_cast<Eigen::Index>(frames + 1) * points, 3);
  full->topRows(points) = aux->frame0;
  full->bottomRows(static_cast<Eigen::Index>(frames) * points) = p;
  Mat y(1, 1);
  y(0, 0) = loss::physics_loss(full->data(), frames, points, aux->def_grads, aux->affines,
                               aux->masses, aux->grid, aux->frame_dt);
  bool rg = nodes_[pred].rg;
  Var out = make(std::move(y), rg, nullptr);
  if (rg)
    nodes_[out].back = [this, pred, out, aux, full, frames, points] {
      Mat g = Mat::Zero(static_cast<Eigen::Index>(frames + 1) * points, 3);
      loss::physics_loss_grad(full->data(), frames, points, aux->def_grads, aux->affines,
                              aux->masses, aux->grid, aux->frame_dt, nodes_[out].grad(0, 0),
                              g.data());
      accumulate(pred, g.bottomRows(static_cast<Eigen::Index>(frames) * points));
    };
  return out;
}

}  // namespace physdyn::nn
