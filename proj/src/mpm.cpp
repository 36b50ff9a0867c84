#include "physdyn/mpm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace physdyn::mpm {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

LameParams lame_params(double youngs_modulus, double poisson_ratio) {
  require(youngs_modulus > 0.0, Errc::InvalidArgument, "lame_params: E must be positive");
  require(poisson_ratio > 0.0 && poisson_ratio < 0.5, Errc::InvalidArgument,
          "lame_params: nu must lie in (0, 0.5); nu = 0.5 is the incompressible limit");
  LameParams lame;
  lame.mu = youngs_modulus / (2.0 * (1.0 + poisson_ratio));
  lame.lambda = youngs_modulus * poisson_ratio /
                ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
  return lame;
}

namespace {

// Cyclic Jacobi diagonalization of a symmetric 3x3. Returns eigenvalues in
// `diag` and accumulates rotations into `vectors` (columns).
void jacobi_eigen(Mat3 a, Vec3& diag, Mat3& vectors) {
  vectors.setIdentity();
  double scale = a.squaredNorm() + 1e-300;
  for (int sweep = 0; sweep < 32; ++sweep) {
    double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off <= 1e-31 * scale) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a(p, q) == 0.0) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        Mat3 rot = Mat3::Identity();
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
        vectors = vectors * rot;
      }
    }
  }
  diag = a.diagonal();
}

Vec3 orthogonal_unit(const Vec3& w) {
  Vec3 seed = std::abs(w.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return (seed - seed.dot(w) * w).normalized();
}

}  // namespace

void svd3(const Mat3& f, Mat3& u, Vec3& sigma, Mat3& v) {
  Vec3 eig;
  jacobi_eigen(f.transpose() * f, eig, v);

  int order[3] = {0, 1, 2};
  std::sort(order, order + 3, [&](int a, int b) { return eig[a] > eig[b]; });
  Mat3 vs;
  Vec3 es;
  for (int i = 0; i < 3; ++i) {
    vs.col(i) = v.col(order[i]);
    es[i] = std::max(eig[order[i]], 0.0);
  }
  v = vs;
  if (v.determinant() < 0.0) v.col(2) = -v.col(2);

  // F v_i = sigma_i u_i exactly, so normalized image columns give U.
  sigma = es.cwiseSqrt();
  Mat3 b = f * v;
  double tiny = 1e-12 * std::max(sigma[0], 1e-300);

  u.col(0) = sigma[0] > tiny ? Vec3(b.col(0) / sigma[0]).normalized() : Vec3::UnitX();
  Vec3 c1 = sigma[1] > tiny ? Vec3(b.col(1) / sigma[1]) : orthogonal_unit(u.col(0));
  c1 -= c1.dot(u.col(0)) * u.col(0);
  if (c1.norm() < 1e-12) c1 = orthogonal_unit(u.col(0));
  u.col(1) = c1.normalized();
  u.col(2) = u.col(0).cross(u.col(1));
  // det(U) is +1 by construction; a reflection in F moves into sigma[2]
  if (sigma[2] > tiny && u.col(2).dot(b.col(2)) < 0.0) sigma[2] = -sigma[2];
}

Mat3 polar_rotation(const Mat3& f) {
  Mat3 u, v;
  Vec3 sigma;
  svd3(f, u, sigma, v);
  return u * v.transpose();
}

double fixed_corotated_energy(const Mat3& f, double mu, double lambda) {
  Mat3 u, v;
  Vec3 sigma;
  svd3(f, u, sigma, v);
  double j = f.determinant();
  double stretch = (sigma - Vec3::Ones()).squaredNorm();
  return mu * stretch + 0.5 * lambda * (j - 1.0) * (j - 1.0);
}

namespace {

Mat3 cofactor(const Mat3& f) {
  Mat3 c;
  c.col(0) = f.col(1).cross(f.col(2));
  c.col(1) = f.col(2).cross(f.col(0));
  c.col(2) = f.col(0).cross(f.col(1));
  return c;
}

}  // namespace

Mat3 first_piola_stress(const Mat3& f, double mu, double lambda, Material material) {
  double j = f.determinant();
  if (material == Material::Elastic)
    require(j > 0.0, Errc::SimulationError, "first_piola_stress: det(F) <= 0 for elastic material");
  Mat3 r = polar_rotation(f);
  return 2.0 * mu * (f - r) + lambda * (j - 1.0) * cofactor(f);
}

Mat3 plastic_project(const Mat3& f, Material material, const PlasticityParams& params) {
  if (material == Material::Elastic || material == Material::Rigid) return f;

  Mat3 u, v;
  Vec3 sigma;
  svd3(f, u, sigma, v);

  if (material == Material::Plasticine) {
    Vec3 clamped = sigma.cwiseMax(1.0 - params.plasticine_theta_c)
                       .cwiseMin(1.0 + params.plasticine_theta_s);
    return u * clamped.asDiagonal() * v.transpose();
  }

  // Sand: Drucker-Prager return mapping on the Hencky strain.
  Vec3 safe_sigma = sigma.cwiseMax(1e-10);
  Vec3 eps = safe_sigma.array().log();
  double trace = eps.sum();
  if (trace > 0.0) {
    // expanding: no resistance, project to the undeformed state
    return u * v.transpose();
  }
  Vec3 dev = eps - Vec3::Constant(trace / 3.0);
  double dev_norm = dev.norm();
  if (dev_norm <= 0.0) return f;  // pure hydrostatic compression, inside the cone
  double phi = params.sand_friction_angle * kPi / 180.0;
  double alpha = std::sqrt(2.0 / 3.0) * 2.0 * std::sin(phi) / (3.0 - std::sin(phi));
  double mu = params.lame.mu, lambda = params.lame.lambda;
  double delta_gamma = dev_norm + alpha * trace * (3.0 * lambda + 2.0 * mu) / (2.0 * mu);
  if (delta_gamma <= 0.0) return f;  // inside the yield surface
  Vec3 projected = eps - delta_gamma * dev / dev_norm;
  return u * projected.array().exp().matrix().asDiagonal() * v.transpose();
}

void Grid::reset() {
  mass.assign(node_count(), 0.0);
  momentum.assign(node_count(), Vec3::Zero());
}

double stable_dt(const SimConfig& cfg, double youngs_modulus) {
  double wave_speed = std::sqrt(youngs_modulus / cfg.density) + cfg.speed_guard;
  return cfg.cfl_safety * cfg.dx() / wave_speed;
}

namespace {

struct KernelWeights {
  int base[3];
  double w[3][3];   // [axis][offset]
  double dw[3][3];  // d/dx, includes the 1/dx factor
};

// Quadratic B-spline over the 3x3x3 neighborhood.
inline KernelWeights kernel(const Vec3& x, double dx) {
  KernelWeights k;
  for (int a = 0; a < 3; ++a) {
    double xs = x[a] / dx;
    int base = static_cast<int>(std::floor(xs - 0.5));
    double fx = xs - base;
    k.base[a] = base;
    k.w[a][0] = 0.5 * (1.5 - fx) * (1.5 - fx);
    k.w[a][1] = 0.75 - (fx - 1.0) * (fx - 1.0);
    k.w[a][2] = 0.5 * (fx - 0.5) * (fx - 0.5);
    k.dw[a][0] = (fx - 1.5) / dx;
    k.dw[a][1] = 2.0 * (1.0 - fx) / dx;
    k.dw[a][2] = (fx - 0.5) / dx;
  }
  return k;
}

inline bool inside_domain(const Vec3& x, double dx) {
  for (int a = 0; a < 3; ++a)
    if (!(x[a] >= dx && x[a] <= 1.0 - dx)) return false;
  return true;
}

constexpr int kWallCells = 3;

}  // namespace

void p2g(const std::vector<Particle>& particles, Grid& grid, double dt,
         const std::vector<Vec3>& external_force, const LameParams& lame,
         Material material) {
  require(external_force.empty() || external_force.size() == particles.size(),
          Errc::ShapeMismatch, "p2g: external force count mismatch");
  grid.reset();
  double dx = grid.dx();
  for (std::size_t p = 0; p < particles.size(); ++p) {
    const Particle& pt = particles[p];
    if (!inside_domain(pt.x, dx))
      fail(Errc::SimulationError, "p2g: particle " + std::to_string(p) + " outside domain");

    Mat3 stress;
    try {
      stress = -dt * pt.volume0 *
               first_piola_stress(pt.F, lame.mu, lame.lambda, material) * pt.F.transpose();
    } catch (const Error& e) {
      fail(Errc::SimulationError, "p2g: particle " + std::to_string(p) + ": " + e.what());
    }
    Vec3 impulse = external_force.empty() ? Vec3::Zero() : Vec3(external_force[p] * dt);

    KernelWeights k = kernel(pt.x, dx);
    Vec3 mv = pt.mass * pt.v;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        for (int l = 0; l < 3; ++l) {
          double w = k.w[0][i] * k.w[1][j] * k.w[2][l];
          Vec3 grad(k.dw[0][i] * k.w[1][j] * k.w[2][l],
                    k.w[0][i] * k.dw[1][j] * k.w[2][l],
                    k.w[0][i] * k.w[1][j] * k.dw[2][l]);
          Vec3 node_pos = Vec3(k.base[0] + i, k.base[1] + j, k.base[2] + l) * dx;
          std::size_t idx = grid.index(k.base[0] + i, k.base[1] + j, k.base[2] + l);
          grid.mass[idx] += w * pt.mass;
          grid.momentum[idx] +=
              w * (mv + pt.mass * (pt.C * (node_pos - pt.x))) + stress * grad + w * impulse;
        }
      }
    }
  }
}

void grid_update(Grid& grid, double dt, const Vec3& gravity, double floor_height,
                 double floor_friction, double mass_eps_rel) {
  double dx = grid.dx();
  double max_mass = 0.0;
  for (double m : grid.mass) max_mass = std::max(max_mass, m);
  double eps = mass_eps_rel * max_mass;

  int res = grid.resolution;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      for (int l = 0; l < res; ++l) {
        std::size_t idx = grid.index(i, j, l);
        if (grid.mass[idx] <= eps || grid.mass[idx] <= 0.0) {
          grid.momentum[idx].setZero();
          continue;
        }
        Vec3 v = grid.momentum[idx] / grid.mass[idx] + gravity * dt;

        // floor: zero inbound normal velocity, Coulomb friction on tangent
        double node_y = j * dx;
        if (node_y < floor_height + dx && v.y() < 0.0) {
          double vn = -v.y();
          Vec3 vt(v.x(), 0.0, v.z());
          double vt_norm = vt.norm();
          double scale =
              vt_norm > 0.0 ? std::max(0.0, 1.0 - floor_friction * vn / vt_norm) : 0.0;
          v = vt * scale;
        }

        // domain walls: separate condition a few cells from each face
        int coords[3] = {i, j, l};
        for (int a = 0; a < 3; ++a) {
          if (coords[a] < kWallCells && v[a] < 0.0) v[a] = 0.0;
          if (coords[a] > res - 1 - kWallCells && v[a] > 0.0) v[a] = 0.0;
        }
        grid.momentum[idx] = v;
      }
    }
  }
}

void g2p(std::vector<Particle>& particles, const Grid& grid, double dt,
         Material material, const PlasticityParams& plasticity) {
  double dx = grid.dx();
  double inertia = 4.0 / (dx * dx);
  for (std::size_t p = 0; p < particles.size(); ++p) {
    Particle& pt = particles[p];
    KernelWeights k = kernel(pt.x, dx);
    Vec3 v_new = Vec3::Zero();
    Mat3 c_new = Mat3::Zero();
    Mat3 vel_grad = Mat3::Zero();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        for (int l = 0; l < 3; ++l) {
          double w = k.w[0][i] * k.w[1][j] * k.w[2][l];
          Vec3 grad(k.dw[0][i] * k.w[1][j] * k.w[2][l],
                    k.w[0][i] * k.dw[1][j] * k.w[2][l],
                    k.w[0][i] * k.w[1][j] * k.dw[2][l]);
          Vec3 node_pos = Vec3(k.base[0] + i, k.base[1] + j, k.base[2] + l) * dx;
          const Vec3& vi = grid.momentum[grid.index(k.base[0] + i, k.base[1] + j, k.base[2] + l)];
          v_new += w * vi;
          c_new += inertia * w * vi * (node_pos - pt.x).transpose();
          vel_grad += vi * grad.transpose();
        }
      }
    }
    Mat3 f_trial = (Mat3::Identity() + dt * vel_grad) * pt.F;
    Mat3 f_proj = plastic_project(f_trial, material, plasticity);
    if (material == Material::Plasticine || material == Material::Sand) {
      double det_trial = f_trial.determinant();
      double det_proj = f_proj.determinant();
      if (det_proj > 1e-12) pt.plastic_det *= det_trial / det_proj;
    }
    pt.F = f_proj;
    pt.C = c_new;
    pt.v = v_new;
    pt.x += dt * v_new;
  }
}

TrajectorySequence simulate(const PointCloud& object, const PhysicsCondition& cond,
                            const SimConfig& cfg, int num_frames) {
  cond.validate();
  require(cond.material != Material::Rigid, Errc::InvalidArgument,
          "simulate: rigid material uses the rigid-body backend");
  require(num_frames >= 1, Errc::InvalidArgument, "simulate: need at least one frame");
  int n = object.size();
  require(n >= 1, Errc::InvalidArgument, "simulate: empty object");

  {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& p : object.positions)
      best = std::min(best, (p - cond.drag_point).norm());
    require(best <= 1e-6, Errc::InvalidArgument,
            "simulate: drag point does not coincide with an object point");
  }

  // substep size from the stability bound unless pinned by the config
  double dt;
  int substeps;
  if (cfg.substeps_per_frame > 0) {
    substeps = cfg.substeps_per_frame;
    dt = cfg.substep_dt > 0.0 ? cfg.substep_dt : cfg.frame_dt / substeps;
  } else if (cfg.substep_dt > 0.0) {
    dt = cfg.substep_dt;
    substeps = static_cast<int>(std::ceil(cfg.frame_dt / dt - 1e-12));
    dt = cfg.frame_dt / substeps;
  } else {
    double bound = stable_dt(cfg, cond.youngs_modulus);
    substeps = std::max(1, static_cast<int>(std::ceil(cfg.frame_dt / bound - 1e-12)));
    dt = cfg.frame_dt / substeps;
  }
  double wave_speed = std::sqrt(cond.youngs_modulus / cfg.density);
  require(dt <= 0.5 * cfg.dx() / wave_speed + 1e-15, Errc::SimulationError,
          "simulate: substep dt violates the stability bound 0.5*dx/sqrt(E/rho)");

  LameParams lame = lame_params(cond.youngs_modulus, cond.poisson_ratio);
  PlasticityParams plasticity{cfg.plasticine_theta_c, cfg.plasticine_theta_s,
                              cfg.sand_friction_angle, lame};

  double volume = estimate_volume(object);
  double particle_mass = cfg.density * volume / n;
  double particle_volume = volume / n;

  std::vector<Particle> particles(n);
  for (int i = 0; i < n; ++i) {
    particles[i].x = object.positions[i];
    particles[i].mass = particle_mass;
    particles[i].volume0 = particle_volume;
  }

  // constant drag force spread uniformly over the region near the drag point
  std::vector<Vec3> force(n, Vec3::Zero());
  bool has_force = cond.force.norm() > 0.0;
  if (has_force) {
    std::vector<int> region;
    for (int i = 0; i < n; ++i)
      if ((object.positions[i] - cond.drag_point).norm() <= cfg.force_region_radius)
        region.push_back(i);
    Vec3 per_particle = cond.force / static_cast<double>(region.size());
    for (int i : region) force[i] = per_particle;
  }

  Grid grid;
  grid.resolution = cfg.grid_resolution;

  TrajectorySequence traj;
  traj.initial = object;
  traj.frame_dt = cfg.frame_dt;
  traj.frames.reserve(num_frames);
  traj.def_grads.reserve(num_frames);
  traj.affines.reserve(num_frames);

  long total_substeps = static_cast<long>(num_frames) * substeps;
  long active_substeps = static_cast<long>(std::ceil(cfg.force_active_fraction * total_substeps));
  static const std::vector<Vec3> no_force;

  long step_counter = 0;
  for (int frame = 0; frame < num_frames; ++frame) {
    for (int s = 0; s < substeps; ++s, ++step_counter) {
      bool active = has_force && step_counter < active_substeps;
      try {
        p2g(particles, grid, dt, active ? force : no_force, lame, cond.material);
        grid_update(grid, dt, cfg.gravity, cond.floor_height, cfg.floor_friction,
                    cfg.mass_eps_rel);
        g2p(particles, grid, dt, cond.material, plasticity);
      } catch (const Error& e) {
        fail(Errc::SimulationError, "simulate: frame " + std::to_string(frame) + " substep " +
                                        std::to_string(s) + ": " + e.what());
      }
      for (int i = 0; i < n; ++i) {
        const Particle& pt = particles[i];
        if (!pt.x.allFinite() || !pt.v.allFinite() || !pt.F.allFinite())
          fail(Errc::SimulationError, "simulate: non-finite state at frame " +
                                          std::to_string(frame) + " substep " +
                                          std::to_string(s) + " particle " + std::to_string(i));
      }
    }
    std::vector<Vec3> xs(n);
    std::vector<Mat3> fs(n), cs(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = particles[i].x;
      fs[i] = particles[i].F;
      cs[i] = particles[i].C;
    }
    traj.frames.push_back(std::move(xs));
    traj.def_grads.push_back(std::move(fs));
    traj.affines.push_back(std::move(cs));
  }
  return traj;
}

}  // namespace physdyn::mpm
