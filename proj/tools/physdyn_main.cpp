// physdyn: batch CLI over the simulators, dataset generator, trajectory
// diffusion model, metrics, and inverse parameter estimation.
//
// Every subcommand reads one JSON config; --set key=value overrides nested
// entries with dotted paths. Exit codes: 1 config error, 2 simulation
// failure, 3 I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "physdyn/datagen.hpp"
#include "physdyn/inverse.hpp"
#include "physdyn/metrics.hpp"
#include "physdyn/nn/checkpoint.hpp"
#include "physdyn/nn/sampler.hpp"
#include "physdyn/nn/train.hpp"

using nlohmann::json;
using namespace physdyn;

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::int64_t seed = -1;  // <0: keep config seeds
  bool export_ply = false;
};

json load_config(const CliOptions& opts) {
  json cfg = json::object();
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    require(in.good(), Errc::ConfigError, "cannot open config " + opts.config_path);
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      fail(Errc::ConfigError, "config parse error: " + std::string(e.what()));
    }
  }
  for (const std::string& kv : opts.overrides) {
    auto eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, Errc::ConfigError,
            "--set expects key.path=value, got '" + kv + "'");
    std::string path = kv.substr(0, eq);
    std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;  // bare strings stay strings
    }
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
      auto dot = path.find('.', start);
      std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
      require(!key.empty(), Errc::ConfigError, "--set has an empty path segment: " + path);
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      node = &(*node)[key];
      start = dot + 1;
    }
  }
  return cfg;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(Errc::ConfigError, "config key '" + key + "': " + e.what());
  }
}

json require_key(const json& j, const std::string& key, const std::string& section) {
  require(j.contains(key), Errc::ConfigError,
          "config is missing required key '" + section + "." + key + "'");
  return j.at(key);
}

Vec3 vec3_of(const json& j, const std::string& what) {
  require(j.is_array() && j.size() == 3, Errc::ConfigError, what + " must be a 3-array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

mpm::SimConfig sim_config(const json& root) {
  json s = root.value("sim", json::object());
  mpm::SimConfig cfg;
  cfg.grid_resolution = get_or(s, "grid_resolution", cfg.grid_resolution);
  cfg.substep_dt = get_or(s, "substep_dt", cfg.substep_dt);
  cfg.substeps_per_frame = get_or(s, "substeps_per_frame", cfg.substeps_per_frame);
  cfg.frame_dt = get_or(s, "frame_dt", cfg.frame_dt);
  if (s.contains("gravity")) cfg.gravity = vec3_of(s["gravity"], "sim.gravity");
  cfg.floor_friction = get_or(s, "floor_friction", cfg.floor_friction);
  cfg.margin = get_or(s, "margin", cfg.margin);
  cfg.density = get_or(s, "density", cfg.density);
  cfg.force_region_radius = get_or(s, "force_region_radius", cfg.force_region_radius);
  cfg.force_active_fraction = get_or(s, "force_active_fraction", cfg.force_active_fraction);
  cfg.cfl_safety = get_or(s, "cfl_safety", cfg.cfl_safety);
  cfg.speed_guard = get_or(s, "speed_guard", cfg.speed_guard);
  cfg.plasticine_theta_c = get_or(s, "plasticine_theta_c", cfg.plasticine_theta_c);
  cfg.plasticine_theta_s = get_or(s, "plasticine_theta_s", cfg.plasticine_theta_s);
  cfg.sand_friction_angle = get_or(s, "sand_friction_angle", cfg.sand_friction_angle);
  return cfg;
}

rigid::RigidConfig rigid_config(const json& root) {
  json r = root.value("rigid", json::object());
  rigid::RigidConfig cfg;
  cfg.restitution = get_or(r, "restitution", cfg.restitution);
  cfg.friction = get_or(r, "friction", cfg.friction);
  cfg.substeps_per_frame = get_or(r, "substeps_per_frame", cfg.substeps_per_frame);
  return cfg;
}

nn::ModelConfig model_config(const json& root) {
  json m = root.value("model", json::object());
  nn::ModelConfig cfg;
  cfg.layers = get_or(m, "layers", cfg.layers);
  cfg.latent = get_or(m, "latent", cfg.latent);
  cfg.heads = get_or(m, "heads", cfg.heads);
  cfg.cond_dim = get_or(m, "cond_dim", cfg.cond_dim);
  cfg.mlp_ratio = get_or(m, "mlp_ratio", cfg.mlp_ratio);
  cfg.points = get_or(m, "points", cfg.points);
  cfg.frames = get_or(m, "frames", cfg.frames);
  cfg.diffusion_steps = get_or(m, "diffusion_steps", cfg.diffusion_steps);
  cfg.e_log_min = get_or(m, "e_log_min", cfg.e_log_min);
  cfg.e_log_max = get_or(m, "e_log_max", cfg.e_log_max);
  cfg.nu_min = get_or(m, "nu_min", cfg.nu_min);
  cfg.nu_max = get_or(m, "nu_max", cfg.nu_max);
  return cfg;
}

std::string out_path(const CliOptions& opts, const std::string& configured,
                     const std::string& fallback_name) {
  std::filesystem::path p =
      configured.empty() ? std::filesystem::path(opts.out_dir) / fallback_name
                         : std::filesystem::path(configured);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p.string();
}

void write_ply(const std::string& path, const std::vector<Vec3>& points) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Errc::IoError, "cannot write " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const Vec3& p : points)
    out << static_cast<float>(p.x()) << " " << static_cast<float>(p.y()) << " "
        << static_cast<float>(p.z()) << "\n";
}

void export_ply_frames(const std::string& stem, const TrajectorySequence& traj) {
  char name[512];
  std::snprintf(name, sizeof(name), "%s_frame_%03d.ply", stem.c_str(), 0);
  write_ply(name, traj.initial.positions);
  for (int f = 0; f < traj.num_frames(); ++f) {
    std::snprintf(name, sizeof(name), "%s_frame_%03d.ply", stem.c_str(), f + 1);
    write_ply(name, traj.frames[f]);
  }
}

json condition_to_json(const PhysicsCondition& cond) {
  return json{{"material", material_name(cond.material)},
              {"force", {cond.force.x(), cond.force.y(), cond.force.z()}},
              {"drag_point", {cond.drag_point.x(), cond.drag_point.y(), cond.drag_point.z()}},
              {"youngs_modulus", cond.youngs_modulus},
              {"poisson_ratio", cond.poisson_ratio},
              {"floor_height", cond.floor_height}};
}

data::DatasetSpec dataset_spec(const json& root, const CliOptions& opts) {
  json d = root.value("dataset", json::object());
  data::DatasetSpec spec;
  if (d.contains("counts")) {
    json c = d["counts"];
    spec.counts = {get_or(c, "elastic", 0), get_or(c, "plasticine", 0), get_or(c, "sand", 0),
                   get_or(c, "rigid", 0)};
  }
  spec.num_points = get_or(d, "num_points", spec.num_points);
  spec.num_frames = get_or(d, "frames", spec.num_frames);
  spec.seed = get_or<std::uint64_t>(d, "seed", spec.seed);
  if (opts.seed >= 0) spec.seed = static_cast<std::uint64_t>(opts.seed);
  spec.e_min = get_or(d, "e_min", spec.e_min);
  spec.e_max = get_or(d, "e_max", spec.e_max);
  spec.nu_min = get_or(d, "nu_min", spec.nu_min);
  spec.nu_max = get_or(d, "nu_max", spec.nu_max);
  spec.force_min_rel = get_or(d, "force_min_rel", spec.force_min_rel);
  spec.force_max_rel = get_or(d, "force_max_rel", spec.force_max_rel);
  spec.noise_sigma = get_or(d, "noise_sigma", spec.noise_sigma);
  spec.drop_clearance = get_or(d, "drop_clearance", spec.drop_clearance);
  spec.normal_neighbors = get_or(d, "normal_neighbors", spec.normal_neighbors);
  std::string scenario = get_or<std::string>(d, "scenario", "drag_force");
  if (scenario == "drag_force") {
    spec.scenario = data::Scenario::DragForce;
  } else if (scenario == "gravity_drop") {
    spec.scenario = data::Scenario::GravityDrop;
  } else {
    fail(Errc::ConfigError, "dataset.scenario must be drag_force or gravity_drop");
  }
  spec.sim = sim_config(root);
  spec.rigid = rigid_config(root);
  return spec;
}

std::vector<data::TrajectoryRecord> load_dataset_records(const std::string& dir) {
  std::string manifest_path = (std::filesystem::path(dir) / "manifest.jsonl").string();
  std::ifstream in(manifest_path);
  require(in.good(), Errc::IoError, "cannot open manifest " + manifest_path);
  std::vector<data::TrajectoryRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      fail(Errc::IoError, "manifest parse error: " + std::string(e.what()));
    }
    std::string file = require_key(row, "file", "manifest").get<std::string>();
    records.push_back(data::read_trajectory((std::filesystem::path(dir) / file).string()));
  }
  require(!records.empty(), Errc::IoError, "manifest has no rows: " + manifest_path);
  return records;
}

void emit(const json& report, const json& cfg) {
  std::string path = get_or<std::string>(cfg, "report", "");
  if (path.empty() || path == "-") {
    std::cout << report.dump(2) << std::endl;
  } else {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), Errc::IoError, "cannot write report " + path);
    out << report.dump(2) << std::endl;
  }
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const CliOptions& opts) {
  json root = load_config(opts);
  json sim_section = root.value("simulate", json::object());
  mpm::SimConfig sim = sim_config(root);

  std::string mesh_path = require_key(sim_section, "mesh", "simulate").get<std::string>();
  TriMesh mesh = load_obj(mesh_path);

  std::uint64_t seed = get_or<std::uint64_t>(sim_section, "seed", 0);
  if (opts.seed >= 0) seed = static_cast<std::uint64_t>(opts.seed);
  Rng rng(seed);

  int num_points = get_or(sim_section, "num_points", 512);
  int frames = get_or(sim_section, "frames", 24);
  PointCloud sampled = sample_surface_points(mesh, num_points, rng);
  PointCloud object = normalize_to_domain(sampled, sim.margin).first;

  PhysicsCondition cond;
  std::string mat_name = get_or<std::string>(sim_section, "material", "elastic");
  auto mat = material_from_name(mat_name);
  require(mat.has_value(), Errc::ConfigError, "unknown material '" + mat_name + "'");
  cond.material = *mat;

  data::DatasetSpec spec = dataset_spec(root, opts);
  if (sim_section.contains("condition")) {
    json c = sim_section["condition"];
    cond.youngs_modulus = get_or(c, "youngs_modulus", 1e5);
    cond.poisson_ratio = get_or(c, "poisson_ratio", 0.3);
    if (c.contains("force")) cond.force = vec3_of(c["force"], "simulate.condition.force");
    Vec3 lo, hi;
    object.bounds(lo, hi);
    cond.floor_height = get_or(c, "floor_height", lo.y());
    if (c.contains("drag_point")) {
      Vec3 want = vec3_of(c["drag_point"], "simulate.condition.drag_point");
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int i = 0; i < object.size(); ++i) {
        double dist = (object.positions[i] - want).norm();
        if (dist < best_d) {
          best_d = dist;
          best = i;
        }
      }
      cond.drag_point = object.positions[best];  // snapped onto the cloud
    } else {
      cond.drag_point = object.positions[0];
    }
  } else {
    cond = data::sample_condition(object, rng, spec, cond.material);
  }

  TrajectorySequence traj;
  if (cond.material == Material::Rigid) {
    traj = rigid::rigid_simulate(object, cond, sim, rigid_config(root), frames);
    traj.def_grads.clear();
  } else {
    traj = mpm::simulate(object, cond, sim, frames);
  }

  std::string output =
      out_path(opts, get_or<std::string>(sim_section, "output", ""), "trajectory.ptrj");
  data::write_trajectory(output, traj, cond, data::object_weight(object, sim));
  if (opts.export_ply) export_ply_frames(output.substr(0, output.find_last_of('.')), traj);

  emit(json{{"schema_version", 1},
            {"command", "simulate"},
            {"output", output},
            {"points", object.size()},
            {"frames", frames},
            {"condition", condition_to_json(cond)}},
       sim_section);
  return 0;
}

// -------------------------------------------------------------- gen-dataset

int cmd_gen_dataset(const CliOptions& opts) {
  json root = load_config(opts);
  json d = root.value("dataset", json::object());
  data::DatasetSpec spec = dataset_spec(root, opts);

  std::vector<TriMesh> meshes;
  json mesh_list = require_key(d, "meshes", "dataset");
  require(mesh_list.is_array() && !mesh_list.empty(), Errc::ConfigError,
          "dataset.meshes must be a nonempty array of OBJ paths");
  for (const auto& m : mesh_list) meshes.push_back(load_obj(m.get<std::string>()));

  std::string dir = out_path(opts, get_or<std::string>(d, "output_dir", ""), "dataset");
  std::filesystem::create_directories(dir);
  data::DatasetResult res = data::generate_dataset(spec, meshes, dir);

  emit(json{{"schema_version", 1},
            {"command", "gen-dataset"},
            {"output_dir", dir},
            {"manifest", res.manifest_path},
            {"requested", spec.total_count()},
            {"generated", res.rows.size()},
            {"skipped", res.skipped.size()}},
       d);
  return 0;
}

// -------------------------------------------------------------------- train

int cmd_train(const CliOptions& opts) {
  json root = load_config(opts);
  json t = root.value("train", json::object());
  nn::ModelConfig cfg = model_config(root);

  nn::TrainConfig tcfg;
  tcfg.steps = get_or(t, "steps", tcfg.steps);
  tcfg.batch_size = get_or(t, "batch_size", tcfg.batch_size);
  tcfg.lr = get_or(t, "lr", tcfg.lr);
  tcfg.warmup_steps = get_or(t, "warmup_steps", tcfg.warmup_steps);
  tcfg.clip_norm = get_or(t, "clip_norm", tcfg.clip_norm);
  tcfg.weight_decay = get_or(t, "weight_decay", tcfg.weight_decay);
  tcfg.weights.velocity = get_or(t, "lambda_vel", tcfg.weights.velocity);
  tcfg.weights.physics = get_or(t, "lambda_phys", tcfg.weights.physics);
  tcfg.weights.floor = get_or(t, "lambda_floor", tcfg.weights.floor);
  tcfg.loss_grid.resolution = get_or(t, "loss_grid_resolution", tcfg.loss_grid.resolution);
  tcfg.seed = get_or<std::uint64_t>(t, "seed", 0);
  if (opts.seed >= 0) tcfg.seed = static_cast<std::uint64_t>(opts.seed);

  std::string dataset_dir = require_key(t, "dataset_dir", "train").get<std::string>();
  std::vector<data::TrajectoryRecord> records = load_dataset_records(dataset_dir);
  std::vector<nn::TrainSample> samples;
  samples.reserve(records.size());
  for (const auto& rec : records) samples.push_back(nn::prepare_sample(rec, cfg, tcfg.loss_grid));

  std::string log_path = out_path(opts, get_or<std::string>(t, "loss_log", ""), "train_log.jsonl");
  std::ofstream log(log_path, std::ios::trunc);
  require(log.good(), Errc::IoError, "cannot write loss log " + log_path);
  log << json{{"schema_version", 1}, {"type", "loss_log"}}.dump() << "\n";
  auto on_step = [&](const nn::LossLogRow& row) {
    log << json{{"step", row.step},         {"lr", row.lr},
                {"total", row.total},       {"diffusion", row.diffusion},
                {"velocity", row.velocity}, {"physics", row.physics},
                {"floor", row.floor}}
               .dump()
        << "\n";
  };
  nn::TrainResult result = nn::train(samples, cfg, tcfg, on_step);

  std::string ckpt_path = out_path(opts, get_or<std::string>(t, "checkpoint", ""), "model.pdmc");
  nn::save_checkpoint(ckpt_path, cfg, result.params);

  emit(json{{"schema_version", 1},
            {"command", "train"},
            {"checkpoint", ckpt_path},
            {"loss_log", log_path},
            {"steps", tcfg.steps},
            {"final_loss", result.log.empty() ? 0.0 : result.log.back().total}},
       t);
  return 0;
}

// ------------------------------------------------------------------- sample

int cmd_sample(const CliOptions& opts) {
  json root = load_config(opts);
  json s = root.value("sample", json::object());

  nn::Checkpoint ck =
      nn::load_checkpoint(require_key(s, "checkpoint", "sample").get<std::string>());
  data::TrajectoryRecord ref =
      data::read_trajectory(require_key(s, "reference", "sample").get<std::string>());

  std::uint64_t seed = get_or<std::uint64_t>(s, "seed", 0);
  if (opts.seed >= 0) seed = static_cast<std::uint64_t>(opts.seed);
  int steps = get_or(s, "steps", 25);
  Rng rng(seed);
  TrajectorySequence traj = nn::ddim_sample(ck.cfg, ck.params, ref.cond, ref.object_weight,
                                            ref.traj.initial, steps, rng, ref.traj.frame_dt);

  std::string output = out_path(opts, get_or<std::string>(s, "output", ""), "sampled.ptrj");
  data::write_trajectory(output, traj, ref.cond, ref.object_weight);
  if (opts.export_ply) export_ply_frames(output.substr(0, output.find_last_of('.')), traj);

  emit(json{{"schema_version", 1},
            {"command", "sample"},
            {"output", output},
            {"steps", steps},
            {"condition", condition_to_json(ref.cond)}},
       s);
  return 0;
}

// --------------------------------------------------------------------- eval

int cmd_eval(const CliOptions& opts) {
  json root = load_config(opts);
  json e = root.value("eval", json::object());

  data::TrajectoryRecord pred =
      data::read_trajectory(require_key(e, "pred", "eval").get<std::string>());
  data::TrajectoryRecord ref =
      data::read_trajectory(require_key(e, "reference", "eval").get<std::string>());
  require(pred.traj.num_frames() == ref.traj.num_frames() &&
              pred.traj.num_points() == ref.traj.num_points(),
          Errc::ConfigError, "eval: prediction and reference shapes differ");

  int resolution = get_or(e, "viou_resolution", 32);
  metrics::SequenceMetrics m =
      metrics::evaluate_sequence(pred.traj.frames, ref.traj.frames, resolution);

  // standalone plausibility scores against the reference trajectory
  int frames = ref.traj.num_frames(), points = ref.traj.num_points();
  auto flatten = [&](const TrajectorySequence& t2) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(frames) * points * 3);
    for (const auto& frame : t2.frames)
      for (const Vec3& p : frame) {
        flat.push_back(p.x());
        flat.push_back(p.y());
        flat.push_back(p.z());
      }
    return flat;
  };
  std::vector<double> pflat = flatten(pred.traj);
  std::vector<double> rflat = flatten(ref.traj);
  std::vector<double> frame0;
  for (const Vec3& p : ref.traj.initial.positions) {
    frame0.push_back(p.x());
    frame0.push_back(p.y());
    frame0.push_back(p.z());
  }
  loss::LossWeights weights;
  weights.velocity = get_or(e, "lambda_vel", weights.velocity);
  weights.physics = get_or(e, "lambda_phys", weights.physics);
  weights.floor = get_or(e, "lambda_floor", weights.floor);
  loss::GridConfig grid;
  grid.resolution = get_or(e, "loss_grid_resolution", grid.resolution);
  bool has_aux = ref.traj.has_def_grads() && ref.traj.has_affines();
  if (!has_aux) weights.physics = 0.0;
  std::vector<double> masses(points, 1.0);
  loss::LossBreakdown breakdown = loss::total_loss(
      pflat.data(), rflat.data(), frame0.data(), frames, points, ref.traj.def_grads,
      ref.traj.affines, masses, grid, ref.traj.frame_dt, ref.cond.floor_height,
      ref.cond.material, weights);

  emit(json{{"schema_version", 1},
            {"command", "eval"},
            {"viou", m.viou},
            {"chamfer", m.chamfer},
            {"corr_l2", m.corr_l2},
            {"losses",
             json{{"total", breakdown.total},
                  {"diffusion", breakdown.diffusion},
                  {"velocity", breakdown.velocity},
                  {"physics", breakdown.physics},
                  {"floor", breakdown.floor}}}},
       e);
  return 0;
}

// ----------------------------------------------------------------- estimate

int cmd_estimate(const CliOptions& opts) {
  json root = load_config(opts);
  json e = root.value("estimate", json::object());

  nn::Checkpoint ck =
      nn::load_checkpoint(require_key(e, "checkpoint", "estimate").get<std::string>());
  data::TrajectoryRecord rec =
      data::read_trajectory(require_key(e, "trajectory", "estimate").get<std::string>());

  inverse::FreeParams free;
  free.log_e = false;
  json free_list = e.value("free", json::array({"log_e"}));
  for (const auto& f : free_list) {
    std::string name = f.get<std::string>();
    if (name == "log_e") {
      free.log_e = true;
    } else if (name == "nu") {
      free.nu = true;
    } else if (name == "force") {
      free.force = true;
    } else if (name == "floor") {
      free.floor = true;
    } else {
      fail(Errc::ConfigError, "estimate.free: unknown parameter '" + name + "'");
    }
  }

  inverse::EstimateConfig ecfg;
  ecfg.iterations = get_or(e, "iterations", ecfg.iterations);
  ecfg.lr = get_or(e, "lr", ecfg.lr);
  ecfg.energy.num_t_samples = get_or(e, "num_t_samples", ecfg.energy.num_t_samples);
  ecfg.energy.literal_noisy_target =
      get_or(e, "literal_noisy_target", ecfg.energy.literal_noisy_target);
  ecfg.energy.seed = get_or<std::uint64_t>(e, "seed", 0);
  if (opts.seed >= 0) ecfg.energy.seed = static_cast<std::uint64_t>(opts.seed);

  PhysicsCondition init = rec.cond;
  if (e.contains("init")) {
    json i = e["init"];
    init.youngs_modulus = get_or(i, "youngs_modulus", init.youngs_modulus);
    init.poisson_ratio = get_or(i, "poisson_ratio", init.poisson_ratio);
    init.floor_height = get_or(i, "floor_height", init.floor_height);
    if (i.contains("force")) init.force = vec3_of(i["force"], "estimate.init.force");
  }

  inverse::EstimateResult res = inverse::estimate_params(ck.cfg, ck.params, rec, init, free, ecfg);

  emit(json{{"schema_version", 1},
            {"command", "estimate"},
            {"estimated", condition_to_json(res.cond)},
            {"log10_E", std::log10(res.cond.youngs_modulus)},
            {"energy_trace", res.energy_trace},
            {"diverged", res.diverged}},
       e);
  return 0;
}

int dispatch(const std::string& name, const CliOptions& opts) {
  if (name == "simulate") return cmd_simulate(opts);
  if (name == "gen-dataset") return cmd_gen_dataset(opts);
  if (name == "train") return cmd_train(opts);
  if (name == "sample") return cmd_sample(opts);
  if (name == "eval") return cmd_eval(opts);
  if (name == "estimate") return cmd_estimate(opts);
  fail(Errc::ConfigError, "unknown command " + name);
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError:
    case Errc::InvalidArgument:
    case Errc::ShapeMismatch:
      return 1;
    case Errc::SimulationError:
    case Errc::DegenerateInput:
      return 2;
    case Errc::IoError:
    case Errc::FormatMagic:
    case Errc::FormatVersion:
    case Errc::FormatTruncated:
      return 3;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physics-grounded trajectory toolkit"};
  app.require_subcommand(1);

  CliOptions opts;
  std::string chosen;
  for (const char* name : {"simulate", "gen-dataset", "train", "sample", "eval", "estimate"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opts.config_path, "JSON config file");
    sub->add_option("--seed", opts.seed, "seed override");
    sub->add_option("--set", opts.overrides, "dotted-key config override, key.path=value");
    sub->add_option("--out-dir", opts.out_dir, "default output directory");
    sub->add_flag("--export-ply", opts.export_ply, "write per-frame ASCII PLY clouds");
    sub->callback([&chosen, name] { chosen = name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    return dispatch(chosen, opts);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
