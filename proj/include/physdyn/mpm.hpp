#pragma once

#include <vector>

#include "physdyn/point_cloud.hpp"

namespace physdyn::mpm {

struct LameParams {
  double mu = 0.0;      // shear modulus, Pa
  double lambda = 0.0;  // first Lame parameter, Pa
};

// mu = E / (2(1+nu)), lambda = E*nu / ((1+nu)(1-2nu)). Errors at nu >= 0.5.
LameParams lame_params(double youngs_modulus, double poisson_ratio);

// 3x3 SVD F = U * diag(sigma) * V^T with det(U) = det(V) = +1; for
// negative-determinant F the smallest-magnitude singular value carries
// the sign. Built on a cyclic-Jacobi eigensolve of F^T F.
void svd3(const Mat3& f, Mat3& u, Vec3& sigma, Mat3& v);

// Rotation factor of the polar decomposition, det(R) = +1.
Mat3 polar_rotation(const Mat3& f);

// Fixed-corotated energy density: mu * sum (sigma_i - 1)^2 + lambda/2 (J-1)^2.
double fixed_corotated_energy(const Mat3& f, double mu, double lambda);

// P(F) = 2 mu (F - R) + lambda (J - 1) J F^{-T}, with J F^{-T} taken as the
// cofactor matrix so near-singular F stays finite.
// Elastic material errors when det(F) <= 0; plastic materials must project
// F before calling.
Mat3 first_piola_stress(const Mat3& f, double mu, double lambda,
                        Material material = Material::Elastic);

struct PlasticityParams {
  double plasticine_theta_c = 0.1;     // compression clamp
  double plasticine_theta_s = 0.1;     // stretch clamp
  double sand_friction_angle = 35.0;   // degrees
  LameParams lame;                     // sand return mapping needs mu/lambda
};

// Identity for Elastic. Plasticine: singular values clamped to
// [1-theta_c, 1+theta_s]. Sand: Drucker-Prager return mapping in
// log-strain space (free expansion when tr(eps) > 0).
Mat3 plastic_project(const Mat3& f, Material material, const PlasticityParams& params);

struct Particle {
  Vec3 x = Vec3::Zero();   // position, domain units
  Vec3 v = Vec3::Zero();   // velocity, domain/s
  Mat3 F = Mat3::Identity();
  Mat3 C = Mat3::Zero();   // APIC affine, 1/s
  double mass = 1.0;       // kg
  double volume0 = 1.0;    // initial volume, domain^3
  double plastic_det = 1.0;  // accumulated plastic determinant (bookkeeping)
};

struct Grid {
  int resolution = 48;  // nodes per axis
  std::vector<double> mass;
  std::vector<Vec3> momentum;  // momentum after p2g, velocity after grid_update

  double dx() const { return 1.0 / resolution; }
  std::size_t node_count() const {
    auto r = static_cast<std::size_t>(resolution);
    return r * r * r;
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * resolution + j) * resolution + k;
  }
  Vec3 node_position(int i, int j, int k) const { return Vec3(i, j, k) * dx(); }
  void reset();
};

struct SimConfig {
  int grid_resolution = 48;
  double substep_dt = 0.0;      // 0 = derive from the stability bound
  int substeps_per_frame = 0;   // 0 = derive
  double frame_dt = 1.0 / 24.0;
  Vec3 gravity = Vec3(0.0, -9.8, 0.0);
  double floor_friction = 0.4;
  double mass_eps_rel = 1e-12;  // empty-node threshold relative to max node mass
  double margin = 0.1;
  double density = 1000.0;      // kg / domain^3
  double force_region_radius = 0.1;
  double force_active_fraction = 1.0;  // fraction of the clip the drag force stays on
  double cfl_safety = 0.5;
  double speed_guard = 5.0;     // extra wave-speed margin for advection, domain/s
  double plasticine_theta_c = 0.1;
  double plasticine_theta_s = 0.1;
  double sand_friction_angle = 35.0;

  double dx() const { return 1.0 / grid_resolution; }
};

// Largest substep allowed by the stability bound dt <= cfl_safety * dx / c,
// c = sqrt(E / density) plus the advection guard.
double stable_dt(const SimConfig& cfg, double youngs_modulus);

// Scatter mass, APIC momentum, stress impulse and external-force impulse
// to the grid. external_force may be empty (no applied force).
// Particles must lie inside [dx, 1-dx]^3.
void p2g(const std::vector<Particle>& particles, Grid& grid, double dt,
         const std::vector<Vec3>& external_force, const LameParams& lame,
         Material material);

// Momentum -> velocity, gravity, floor contact (zeroed inbound normal +
// Coulomb tangential friction) and domain-wall separation.
void grid_update(Grid& grid, double dt, const Vec3& gravity, double floor_height,
                 double floor_friction, double mass_eps_rel);

// Gather C, update F (with plastic projection), then velocity and position.
void g2p(std::vector<Particle>& particles, const Grid& grid, double dt,
         Material material, const PlasticityParams& plasticity);

// Full clip: substeps_per_frame substeps per frame, drag force spread
// uniformly over particles within force_region_radius of the drag point.
// Records positions, F and C at every frame boundary.
TrajectorySequence simulate(const PointCloud& object, const PhysicsCondition& cond,
                            const SimConfig& cfg, int num_frames);

}  // namespace physdyn::mpm
