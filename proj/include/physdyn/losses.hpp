#pragma once

#include <cstdint>
#include <vector>

#include "physdyn/point_cloud.hpp"

namespace physdyn::loss {

struct LossWeights {
  double velocity = 1.0;
  double physics = 0.1;
  double floor = 1.0;
};

struct GridConfig {
  int resolution = 48;
  double mass_eps_rel = 1e-12;
  double dx() const { return 1.0 / resolution; }
};

// Trajectory buffers are row-major doubles indexed [frame][point][axis].
// `pred`/`target` cover the F predicted frames; `full` buffers additionally
// carry frame 0 first, i.e. (F+1)*N*3 entries. The vertical axis is y.

// Mean squared error over all entries.
double diffusion_loss(const double* pred, const double* target, std::int64_t count);
void diffusion_loss_grad(const double* pred, const double* target, std::int64_t count,
                         double scale, double* grad_pred);

// Mean squared error of frame-to-frame differences; needs F >= 2.
double velocity_loss(const double* pred, const double* target, int frames, int points);
void velocity_loss_grad(const double* pred, const double* target, int frames, int points,
                        double scale, double* grad_pred);

// (1/N) sum over frames and points of squared floor penetration depth.
double floor_loss(const double* pred, int frames, int points, double floor_height);
void floor_loss_grad(const double* pred, int frames, int points, double floor_height,
                     double scale, double* grad_pred);

struct GridVelocityField {
  int resolution = 0;
  std::vector<Vec3> velocity;
  std::vector<double> mass;
};

// One APIC-weighted P2G averaging step at frame f of the predicted
// trajectory, with per-point velocities from the central difference
// (x^{f+2} - x^f) / (2 dT) and ground-truth affine matrices. Nodes with
// (near-)zero gathered mass carry zero velocity. Stencil nodes outside the
// grid are skipped.
GridVelocityField grid_velocity_approx(const double* full_pred, int frames, int points,
                                       const std::vector<Mat3>& affines_f,
                                       const std::vector<double>& masses,
                                       const GridConfig& grid, int f, double frame_dt);

// Deformation-gradient consistency: mean (over points and frames 1..F-2) of
// the unsquared Frobenius norm of F^{f+1} - g(x^f) F^f, where g comes from
// the approximated grid velocities. def_grads/affines are ground truth for
// frames 1..F.
double physics_loss(const double* full_pred, int frames, int points,
                    const std::vector<std::vector<Mat3>>& def_grads,
                    const std::vector<std::vector<Mat3>>& affines,
                    const std::vector<double>& masses, const GridConfig& grid,
                    double frame_dt);
void physics_loss_grad(const double* full_pred, int frames, int points,
                       const std::vector<std::vector<Mat3>>& def_grads,
                       const std::vector<std::vector<Mat3>>& affines,
                       const std::vector<double>& masses, const GridConfig& grid,
                       double frame_dt, double scale, double* grad_full_pred);

struct LossBreakdown {
  double total = 0.0;
  double diffusion = 0.0;
  double velocity = 0.0;
  double physics = 0.0;
  double floor = 0.0;
};

// L = L_diff + w_vel * L_vel + w_phys * L_phys + w_floor * L_floor.
// The physics term is skipped for rigid material (and when its weight is 0).
LossBreakdown total_loss(const double* pred, const double* target, const double* frame0,
                         int frames, int points,
                         const std::vector<std::vector<Mat3>>& def_grads,
                         const std::vector<std::vector<Mat3>>& affines,
                         const std::vector<double>& masses, const GridConfig& grid,
                         double frame_dt, double floor_height, Material material,
                         const LossWeights& weights);

}  // namespace physdyn::loss
