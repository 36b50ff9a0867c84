#include "physdyn/rigid.hpp"

#include <cmath>
#include <limits>

namespace physdyn::rigid {

namespace {

Mat3 point_mass_inertia(const std::vector<Vec3>& offsets, double point_mass) {
  Mat3 inertia = Mat3::Zero();
  for (const Vec3& r : offsets)
    inertia += point_mass * (r.squaredNorm() * Mat3::Identity() - r * r.transpose());
  return inertia;
}

}  // namespace

TrajectorySequence rigid_simulate(const PointCloud& object, const PhysicsCondition& cond,
                                  const mpm::SimConfig& sim_cfg, const RigidConfig& cfg,
                                  int num_frames) {
  cond.validate();
  require(cond.material == Material::Rigid, Errc::InvalidArgument,
          "rigid_simulate: condition material must be rigid");
  require(num_frames >= 1, Errc::InvalidArgument, "rigid_simulate: need at least one frame");
  int n = object.size();
  require(n >= 1, Errc::InvalidArgument, "rigid_simulate: empty object");

  double volume = estimate_volume(object);
  double total_mass = sim_cfg.density * volume;
  double point_mass = total_mass / n;

  RigidState state;
  state.mass = total_mass;
  state.com = object.centroid();
  state.body_offsets.reserve(n);
  for (const Vec3& p : object.positions) state.body_offsets.push_back(p - state.com);
  state.inertia_body = point_mass_inertia(state.body_offsets, point_mass);
  require(std::abs(state.inertia_body.determinant()) > 1e-30, Errc::DegenerateInput,
          "rigid_simulate: degenerate inertia tensor");

  bool has_force = cond.force.norm() > 0.0;
  Vec3 drag_offset_body = Vec3::Zero();
  if (has_force) {
    double best = std::numeric_limits<double>::infinity();
    int best_idx = 0;
    for (int i = 0; i < n; ++i) {
      double d = (object.positions[i] - cond.drag_point).norm();
      if (d < best) {
        best = d;
        best_idx = i;
      }
    }
    require(best <= 1e-6, Errc::InvalidArgument,
            "rigid_simulate: drag point does not coincide with an object point");
    drag_offset_body = state.body_offsets[best_idx];
  }

  double dt = sim_cfg.frame_dt / cfg.substeps_per_frame;
  double h = cond.floor_height;

  TrajectorySequence traj;
  traj.initial = object;
  traj.frame_dt = sim_cfg.frame_dt;
  traj.frames.reserve(num_frames);
  traj.def_grads.reserve(num_frames);

  long total_substeps = static_cast<long>(num_frames) * cfg.substeps_per_frame;
  long active_substeps =
      static_cast<long>(std::ceil(sim_cfg.force_active_fraction * total_substeps));
  long step_counter = 0;

  for (int frame = 0; frame < num_frames; ++frame) {
    for (int s = 0; s < cfg.substeps_per_frame; ++s, ++step_counter) {
      Mat3 rot = state.orientation.toRotationMatrix();
      bool active = has_force && step_counter < active_substeps;

      Vec3 accel = sim_cfg.gravity;
      Vec3 torque = Vec3::Zero();
      if (active) {
        accel += cond.force / state.mass;
        torque += (rot * drag_offset_body).cross(cond.force);
      }

      // linear part integrates the constant-acceleration step exactly
      state.com += state.linear_velocity * dt + 0.5 * accel * dt * dt;
      state.linear_velocity += accel * dt;

      Mat3 inertia_world = rot * state.inertia_body * rot.transpose();
      Mat3 inertia_world_inv = inertia_world.inverse();
      Vec3 gyro = state.angular_velocity.cross(inertia_world * state.angular_velocity);
      state.angular_velocity += dt * (inertia_world_inv * (torque - gyro));

      Eigen::Quaterniond omega_q(0.0, state.angular_velocity.x(), state.angular_velocity.y(),
                                 state.angular_velocity.z());
      Eigen::Quaterniond dq = omega_q * state.orientation;
      state.orientation.coeffs() += 0.5 * dt * dq.coeffs();
      state.orientation.normalize();
      rot = state.orientation.toRotationMatrix();

      // floor contact: deepest point, normal impulse with restitution,
      // Coulomb friction, then positional projection
      int deepest = -1;
      double min_y = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        double y = state.com.y() + (rot * state.body_offsets[i]).y();
        if (y < min_y) {
          min_y = y;
          deepest = i;
        }
      }
      if (min_y < h) {
        Vec3 r = rot * state.body_offsets[deepest];
        Vec3 u = state.linear_velocity + state.angular_velocity.cross(r);
        inertia_world = rot * state.inertia_body * rot.transpose();
        inertia_world_inv = inertia_world.inverse();
        if (u.y() < 0.0) {
          Vec3 normal = Vec3::UnitY();
          Vec3 ang_n = inertia_world_inv * r.cross(normal);
          double k_n = 1.0 / state.mass + normal.dot(ang_n.cross(r));
          double jn = -(1.0 + cfg.restitution) * u.y() / k_n;
          Vec3 impulse = jn * normal;
          state.linear_velocity += impulse / state.mass;
          state.angular_velocity += inertia_world_inv * r.cross(impulse);

          // friction against the post-normal-impulse tangential velocity
          u = state.linear_velocity + state.angular_velocity.cross(r);
          Vec3 ut(u.x(), 0.0, u.z());
          double ut_norm = ut.norm();
          if (ut_norm > 1e-12) {
            Vec3 t_dir = ut / ut_norm;
            Vec3 ang_t = inertia_world_inv * r.cross(t_dir);
            double k_t = 1.0 / state.mass + t_dir.dot(ang_t.cross(r));
            double jt = std::min(cfg.friction * jn, ut_norm / k_t);
            Vec3 fric = -jt * t_dir;
            state.linear_velocity += fric / state.mass;
            state.angular_velocity += inertia_world_inv * r.cross(fric);
          }
        }
        state.com.y() += h - min_y;
      }

      require(state.com.allFinite() && state.linear_velocity.allFinite() &&
                  state.angular_velocity.allFinite() && state.orientation.coeffs().allFinite(),
              Errc::SimulationError,
              "rigid_simulate: non-finite state at frame " + std::to_string(frame) +
                  " substep " + std::to_string(s));
    }

    std::vector<Vec3> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = state.world_point(i);
    traj.frames.push_back(std::move(xs));
    traj.def_grads.emplace_back(n, Mat3::Identity());
  }
  return traj;
}

}  // namespace physdyn::rigid
