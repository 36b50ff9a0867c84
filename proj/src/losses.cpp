#include "physdyn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "physdyn/detail/bspline.hpp"

namespace physdyn::loss {

namespace {

inline Vec3 point_at(const double* buf, int points, int frame, int p) {
  const double* d = buf + (static_cast<std::int64_t>(frame) * points + p) * 3;
  return Vec3(d[0], d[1], d[2]);
}

inline void add_grad(double* buf, int points, int frame, int p, const Vec3& g) {
  double* d = buf + (static_cast<std::int64_t>(frame) * points + p) * 3;
  d[0] += g.x();
  d[1] += g.y();
  d[2] += g.z();
}

}  // namespace

double diffusion_loss(const double* pred, const double* target, std::int64_t count) {
  require(count > 0, Errc::ShapeMismatch, "diffusion_loss: empty input");
  double sum = 0.0;
  for (std::int64_t i = 0; i < count; ++i) {
    double d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(count);
}

void diffusion_loss_grad(const double* pred, const double* target, std::int64_t count,
                         double scale, double* grad_pred) {
  double k = 2.0 * scale / static_cast<double>(count);
  for (std::int64_t i = 0; i < count; ++i) grad_pred[i] += k * (pred[i] - target[i]);
}

double velocity_loss(const double* pred, const double* target, int frames, int points) {
  require(frames >= 2, Errc::InvalidArgument, "velocity_loss: needs at least 2 frames");
  std::int64_t stride = static_cast<std::int64_t>(points) * 3;
  double sum = 0.0;
  for (int f = 0; f + 1 < frames; ++f) {
    const double* p0 = pred + f * stride;
    const double* t0 = target + f * stride;
    for (std::int64_t i = 0; i < stride; ++i) {
      double e = (t0[stride + i] - t0[i]) - (p0[stride + i] - p0[i]);
      sum += e * e;
    }
  }
  return sum / (static_cast<double>(frames - 1) * stride);
}

void velocity_loss_grad(const double* pred, const double* target, int frames, int points,
                        double scale, double* grad_pred) {
  require(frames >= 2, Errc::InvalidArgument, "velocity_loss_grad: needs at least 2 frames");
  std::int64_t stride = static_cast<std::int64_t>(points) * 3;
  double k = 2.0 * scale / (static_cast<double>(frames - 1) * stride);
  for (int f = 0; f + 1 < frames; ++f) {
    const double* p0 = pred + f * stride;
    const double* t0 = target + f * stride;
    double* g0 = grad_pred + f * stride;
    for (std::int64_t i = 0; i < stride; ++i) {
      double e = (t0[stride + i] - t0[i]) - (p0[stride + i] - p0[i]);
      g0[i] += k * e;
      g0[stride + i] -= k * e;
    }
  }
}

double floor_loss(const double* pred, int frames, int points, double floor_height) {
  double sum = 0.0;
  for (int f = 0; f < frames; ++f) {
    for (int p = 0; p < points; ++p) {
      double depth = floor_height - pred[(static_cast<std::int64_t>(f) * points + p) * 3 + 1];
      if (depth > 0.0) sum += depth * depth;
    }
  }
  return sum / static_cast<double>(points);
}

void floor_loss_grad(const double* pred, int frames, int points, double floor_height,
                     double scale, double* grad_pred) {
  double k = 2.0 * scale / static_cast<double>(points);
  for (int f = 0; f < frames; ++f) {
    for (int p = 0; p < points; ++p) {
      std::int64_t idx = (static_cast<std::int64_t>(f) * points + p) * 3 + 1;
      double depth = floor_height - pred[idx];
      if (depth > 0.0) grad_pred[idx] -= k * depth;
    }
  }
}

namespace {

// Scratch state for the per-frame P2G averaging shared by the grid-velocity
// approximation and the physics loss (forward and backward passes).
struct FrameTransfer {
  const GridConfig& grid;
  int frames, points;
  double frame_dt;
  std::vector<double> den;
  std::vector<Vec3> num;
  std::vector<Vec3> vel;
  std::vector<std::size_t> touched;
  double mass_eps = 0.0;

  explicit FrameTransfer(const GridConfig& g, int fr, int pts, double dt)
      : grid(g), frames(fr), points(pts), frame_dt(dt) {
    std::size_t count = static_cast<std::size_t>(g.resolution) * g.resolution * g.resolution;
    den.assign(count, 0.0);
    num.assign(count, Vec3::Zero());
    vel.assign(count, Vec3::Zero());
  }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * grid.resolution + j) * grid.resolution + k;
  }

  bool in_bounds(int i, int j, int k) const {
    int r = grid.resolution;
    return i >= 0 && i < r && j >= 0 && j < r && k >= 0 && k < r;
  }

  void clear() {
    for (std::size_t idx : touched) {
      den[idx] = 0.0;
      num[idx].setZero();
      vel[idx].setZero();
    }
    touched.clear();
  }

  Vec3 particle_velocity(const double* full_pred, int f, int p) const {
    return (point_at(full_pred, points, f + 2, p) - point_at(full_pred, points, f, p)) /
           (2.0 * frame_dt);
  }

  // scatter pass; weights evaluated at frame-f predicted positions
  void scatter(const double* full_pred, const std::vector<Mat3>& affines_f,
               const std::vector<double>& masses, int f) {
    clear();
    double dx = grid.dx();
    detail::BsplineStencil st;
    for (int p = 0; p < points; ++p) {
      Vec3 xp = point_at(full_pred, points, f, p);
      if (!xp.allFinite()) continue;
      Vec3 vp = particle_velocity(full_pred, f, p);
      st.compute(xp, dx);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          for (int k = 0; k < 3; ++k) {
            int ni = st.base[0] + i, nj = st.base[1] + j, nk = st.base[2] + k;
            if (!in_bounds(ni, nj, nk)) continue;
            std::size_t idx = index(ni, nj, nk);
            double w = st.weight(i, j, k);
            Vec3 node_pos = Vec3(ni, nj, nk) * dx;
            if (den[idx] == 0.0 && num[idx].isZero(0.0)) touched.push_back(idx);
            den[idx] += w * masses[p];
            num[idx] += w * masses[p] * (vp + affines_f[p] * (node_pos - xp));
          }
        }
      }
    }
    double max_den = 0.0;
    for (std::size_t idx : touched) max_den = std::max(max_den, den[idx]);
    mass_eps = grid.mass_eps_rel * max_den;
    for (std::size_t idx : touched)
      vel[idx] = den[idx] > mass_eps && den[idx] > 0.0 ? Vec3(num[idx] / den[idx]) : Vec3::Zero();
  }
};

}  // namespace

GridVelocityField grid_velocity_approx(const double* full_pred, int frames, int points,
                                       const std::vector<Mat3>& affines_f,
                                       const std::vector<double>& masses,
                                       const GridConfig& grid, int f, double frame_dt) {
  require(f >= 0 && f <= frames - 2, Errc::InvalidArgument,
          "grid_velocity_approx: frame must satisfy 0 <= f <= F-2");
  require(static_cast<int>(affines_f.size()) == points &&
              static_cast<int>(masses.size()) == points,
          Errc::ShapeMismatch, "grid_velocity_approx: per-point array size mismatch");
  require(frame_dt > 0.0, Errc::InvalidArgument, "grid_velocity_approx: frame_dt must be positive");

  FrameTransfer ft(grid, frames, points, frame_dt);
  ft.scatter(full_pred, affines_f, masses, f);

  GridVelocityField out;
  out.resolution = grid.resolution;
  out.velocity = ft.vel;
  out.mass = ft.den;
  return out;
}

namespace {

struct PhysicsLossEval {
  double value = 0.0;
  bool with_grad = false;
  double scale = 1.0;
  double* grad = nullptr;

  void run(const double* full_pred, int frames, int points,
           const std::vector<std::vector<Mat3>>& def_grads,
           const std::vector<std::vector<Mat3>>& affines, const std::vector<double>& masses,
           const GridConfig& grid, double frame_dt) {
    require(frames >= 3, Errc::InvalidArgument, "physics_loss: needs at least 3 frames");
    require(static_cast<int>(def_grads.size()) == frames &&
                static_cast<int>(affines.size()) == frames,
            Errc::ShapeMismatch,
            "physics_loss: ground-truth def_grads/affines must cover all F frames");
    require(static_cast<int>(masses.size()) == points, Errc::ShapeMismatch,
            "physics_loss: masses size mismatch");
    require(frame_dt > 0.0, Errc::InvalidArgument, "physics_loss: frame_dt must be positive");

    double norm = 1.0 / (static_cast<double>(points) * (frames - 2));
    double dx = grid.dx();
    FrameTransfer ft(grid, frames, points, frame_dt);

    std::vector<Mat3> m_p(points);       // dL/dg per particle
    std::vector<Vec3> d_node;            // dL/dv_hat per node (dense, cleared via touched)
    std::vector<std::size_t> d_touched;
    if (with_grad) d_node.assign(ft.den.size(), Vec3::Zero());

    detail::BsplineStencil st;
    for (int f = 1; f <= frames - 2; ++f) {
      // def_grads[t] stores frame t+1; frame f   -> index f-1
      const std::vector<Mat3>& f_cur = def_grads[f - 1];
      const std::vector<Mat3>& f_next = def_grads[f];
      const std::vector<Mat3>& c_cur = affines[f - 1];

      ft.scatter(full_pred, c_cur, masses, f);

      if (with_grad) {
        for (std::size_t idx : d_touched) d_node[idx].setZero();
        d_touched.clear();
      }

      // residuals and, when differentiating, scatter dL/dv_hat
      for (int p = 0; p < points; ++p) {
        Vec3 xp = point_at(full_pred, points, f, p);
        Mat3 g = Mat3::Identity();
        bool finite = xp.allFinite();
        if (finite) {
          st.compute(xp, dx);
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              for (int k = 0; k < 3; ++k) {
                int ni = st.base[0] + i, nj = st.base[1] + j, nk = st.base[2] + k;
                if (!ft.in_bounds(ni, nj, nk)) continue;
                g += frame_dt * ft.vel[ft.index(ni, nj, nk)] * st.weight_grad(i, j, k).transpose();
              }
        }
        Mat3 r = f_next[p] - g * f_cur[p];
        double ell = r.norm();
        value += norm * ell;
        if (with_grad) {
          if (ell > 0.0 && finite) {
            // st still holds the stencil for xp from the g computation
            m_p[p] = -(scale * norm / ell) * r * f_cur[p].transpose();
            for (int i = 0; i < 3; ++i)
              for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) {
                  int ni = st.base[0] + i, nj = st.base[1] + j, nk = st.base[2] + k;
                  if (!ft.in_bounds(ni, nj, nk)) continue;
                  std::size_t idx = ft.index(ni, nj, nk);
                  if (ft.den[idx] <= ft.mass_eps || ft.den[idx] <= 0.0) continue;
                  if (d_node[idx].isZero(0.0)) d_touched.push_back(idx);
                  d_node[idx] += frame_dt * (m_p[p] * st.weight_grad(i, j, k));
                }
          } else {
            m_p[p].setZero();
          }
        }
      }

      if (!with_grad) continue;

      // pull node adjoints back to the predicted positions
      for (int p = 0; p < points; ++p) {
        Vec3 xp = point_at(full_pred, points, f, p);
        if (!xp.allFinite()) continue;
        Vec3 vp = ft.particle_velocity(full_pred, f, p);
        st.compute(xp, dx);
        Vec3 grad_a = Vec3::Zero();
        Vec3 grad_v = Vec3::Zero();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
              int ni = st.base[0] + i, nj = st.base[1] + j, nk = st.base[2] + k;
              if (!ft.in_bounds(ni, nj, nk)) continue;
              std::size_t idx = ft.index(ni, nj, nk);
              Vec3 vhat = ft.vel[idx];
              // direct dependence of g on the position through the kernel gradient
              grad_a += frame_dt * (st.weight_hessian(i, j, k) * (m_p[p].transpose() * vhat));
              if (ft.den[idx] <= ft.mass_eps || ft.den[idx] <= 0.0) continue;
              const Vec3& d_i = d_node[idx];
              if (d_i.isZero(0.0)) continue;
              Vec3 q = d_i / ft.den[idx];
              double w = st.weight(i, j, k);
              Vec3 node_pos = Vec3(ni, nj, nk) * dx;
              Vec3 dpos = node_pos - xp;
              grad_v += w * masses[p] * q;
              double dw_coeff =
                  masses[p] * (q.dot(vp + c_cur[p] * dpos) - d_i.dot(vhat) / ft.den[idx]);
              grad_a += dw_coeff * st.weight_grad(i, j, k);
              grad_a -= w * masses[p] * (c_cur[p].transpose() * q);
            }
        grad_a -= grad_v / (2.0 * frame_dt);
        Vec3 grad_b = grad_v / (2.0 * frame_dt);
        add_grad(grad, points, f, p, grad_a);
        add_grad(grad, points, f + 2, p, grad_b);
      }
    }
  }
};

}  // namespace

double physics_loss(const double* full_pred, int frames, int points,
                    const std::vector<std::vector<Mat3>>& def_grads,
                    const std::vector<std::vector<Mat3>>& affines,
                    const std::vector<double>& masses, const GridConfig& grid,
                    double frame_dt) {
  PhysicsLossEval eval;
  eval.run(full_pred, frames, points, def_grads, affines, masses, grid, frame_dt);
  return eval.value;
}

void physics_loss_grad(const double* full_pred, int frames, int points,
                       const std::vector<std::vector<Mat3>>& def_grads,
                       const std::vector<std::vector<Mat3>>& affines,
                       const std::vector<double>& masses, const GridConfig& grid,
                       double frame_dt, double scale, double* grad_full_pred) {
  PhysicsLossEval eval;
  eval.with_grad = true;
  eval.scale = scale;
  eval.grad = grad_full_pred;
  eval.run(full_pred, frames, points, def_grads, affines, masses, grid, frame_dt);
}

LossBreakdown total_loss(const double* pred, const double* target, const double* frame0,
                         int frames, int points,
                         const std::vector<std::vector<Mat3>>& def_grads,
                         const std::vector<std::vector<Mat3>>& affines,
                         const std::vector<double>& masses, const GridConfig& grid,
                         double frame_dt, double floor_height, Material material,
                         const LossWeights& weights) {
  LossBreakdown out;
  std::int64_t count = static_cast<std::int64_t>(frames) * points * 3;
  out.diffusion = diffusion_loss(pred, target, count);
  out.velocity = frames >= 2 ? velocity_loss(pred, target, frames, points) : 0.0;
  out.floor = floor_loss(pred, frames, points, floor_height);
  bool physics_applies = material != Material::Rigid && weights.physics > 0.0;
  if (physics_applies) {
    require(!def_grads.empty() && !affines.empty(), Errc::InvalidArgument,
            "total_loss: physics term needs ground-truth def_grads and affines");
    std::vector<double> full(static_cast<std::size_t>((frames + 1)) * points * 3);
    std::copy(frame0, frame0 + static_cast<std::int64_t>(points) * 3, full.begin());
    std::copy(pred, pred + count, full.begin() + static_cast<std::int64_t>(points) * 3);
    out.physics =
        physics_loss(full.data(), frames, points, def_grads, affines, masses, grid, frame_dt);
  }
  out.total = out.diffusion + weights.velocity * out.velocity + weights.physics * out.physics +
              weights.floor * out.floor;
  return out;
}

}  // namespace physdyn::loss
