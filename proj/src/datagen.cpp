#include "physdyn/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace physdyn::data {

namespace {
constexpr double kTau = 6.28318530717958647692;
}

Vec3 outward_normal(const PointCloud& object, int point_index, int k) {
  int n = object.size();
  require(point_index >= 0 && point_index < n, Errc::InvalidArgument,
          "outward_normal: point index out of range");
  k = std::min(k, n);

  const Vec3& center = object.positions[point_index];
  std::vector<std::pair<double, int>> dist;
  dist.reserve(n);
  for (int i = 0; i < n; ++i)
    dist.emplace_back((object.positions[i] - center).squaredNorm(), i);
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

  Vec3 mean = Vec3::Zero();
  for (int i = 0; i < k; ++i) mean += object.positions[dist[i].second];
  mean /= k;
  Mat3 cov = Mat3::Zero();
  for (int i = 0; i < k; ++i) {
    Vec3 d = object.positions[dist[i].second] - mean;
    cov += d * d.transpose();
  }

  Vec3 outward = center - object.centroid();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Vec3 normal = eig.eigenvectors().col(0);  // smallest eigenvalue
  if (normal.norm() < 0.5 || !normal.allFinite()) normal = outward;
  if (normal.dot(outward) < 0.0) normal = -normal;
  if (normal.norm() < 1e-12) normal = Vec3::UnitY();
  return normal.normalized();
}

double object_weight(const PointCloud& object, const mpm::SimConfig& sim) {
  return sim.density * estimate_volume(object) * sim.gravity.norm();
}

PhysicsCondition sample_condition(const PointCloud& object, Rng& rng, const DatasetSpec& spec,
                                  Material material) {
  require(object.size() >= 1, Errc::InvalidArgument, "sample_condition: empty object");
  PhysicsCondition cond;
  cond.material = material;

  int drag_idx = rng.uniform_int(object.size());
  cond.drag_point = object.positions[drag_idx];

  double log_e = rng.uniform(std::log10(spec.e_min), std::log10(spec.e_max));
  cond.youngs_modulus = std::pow(10.0, log_e);
  cond.poisson_ratio = rng.uniform(spec.nu_min, spec.nu_max);

  Vec3 lo, hi;
  object.bounds(lo, hi);
  if (spec.scenario == Scenario::GravityDrop) {
    cond.force = Vec3::Zero();
    // keep the magnitude draw so both scenarios consume the same stream
    (void)rng.uniform(spec.force_min_rel, spec.force_max_rel);
    cond.floor_height = std::max(0.0, lo.y() - spec.drop_clearance);
  } else {
    Vec3 dir = outward_normal(object, drag_idx, spec.normal_neighbors);
    double weight = object_weight(object, spec.sim);
    double magnitude = rng.uniform(spec.force_min_rel, spec.force_max_rel) * weight;
    cond.force = magnitude * dir;
    cond.floor_height = std::max(0.0, lo.y());
  }
  return cond;
}

PointCloud augment(const PointCloud& object, Rng& rng, double noise_sigma,
                   const AugmentOptions& opts) {
  require(object.size() >= 1, Errc::InvalidArgument, "augment: empty object");
  PointCloud out = object;

  if (opts.rotate) {
    double angle = rng.uniform(0.0, kTau);
    Vec3 centroid = object.centroid();
    double c = std::cos(angle), s = std::sin(angle);
    for (Vec3& p : out.positions) {
      Vec3 d = p - centroid;
      p = centroid + Vec3(c * d.x() + s * d.z(), d.y(), -s * d.x() + c * d.z());
    }
  }
  if (noise_sigma > 0.0) {
    for (Vec3& p : out.positions) p += noise_sigma * rng.normal3();
  }
  if (opts.renormalize) {
    out = normalize_to_domain(out, opts.margin).first;
  }
  return out;
}

namespace {

nlohmann::json condition_json(const PhysicsCondition& cond) {
  return nlohmann::json{
      {"force", {cond.force.x(), cond.force.y(), cond.force.z()}},
      {"drag_point", {cond.drag_point.x(), cond.drag_point.y(), cond.drag_point.z()}},
      {"E", cond.youngs_modulus},
      {"nu", cond.poisson_ratio},
      {"floor_height", cond.floor_height}};
}

std::string manifest_line(const ManifestRow& row) {
  nlohmann::json j{{"schema_version", 1},
                   {"file", row.file},
                   {"seed", row.seed},
                   {"material", material_name(row.material)},
                   {"condition", condition_json(row.cond)},
                   {"status", row.status}};
  return j.dump();
}

}  // namespace

DatasetResult generate_dataset(const DatasetSpec& spec, const std::vector<TriMesh>& meshes,
                               const std::string& out_dir) {
  require(!meshes.empty(), Errc::InvalidArgument, "generate_dataset: need at least one mesh");
  require(spec.total_count() >= 1, Errc::InvalidArgument, "generate_dataset: zero animations");
  require(spec.num_points >= 1 && spec.num_frames >= 1, Errc::InvalidArgument,
          "generate_dataset: N and F must be >= 1");

  std::filesystem::create_directories(out_dir);

  // material assignment: counts expanded in enum order
  std::vector<Material> assignment;
  assignment.reserve(spec.total_count());
  for (int m = 0; m < 4; ++m)
    for (int i = 0; i < spec.counts[m]; ++i) assignment.push_back(static_cast<Material>(m));

  int total = spec.total_count();
  std::vector<ManifestRow> rows(total);

  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      int a = next.fetch_add(1);
      if (a >= total) break;
      ManifestRow& row = rows[a];
      std::uint64_t anim_seed = Rng::mix(spec.seed, static_cast<std::uint64_t>(a));
      Rng rng(anim_seed);
      row.seed = anim_seed;
      row.material = assignment[a];
      try {
        const TriMesh& mesh = meshes[a % meshes.size()];
        PointCloud sampled = sample_surface_points(mesh, spec.num_points, rng);
        PointCloud normalized = normalize_to_domain(sampled, spec.sim.margin).first;
        AugmentOptions aug_opts;
        aug_opts.margin = spec.sim.margin;
        PointCloud object = augment(normalized, rng, spec.noise_sigma, aug_opts);
        PhysicsCondition cond = sample_condition(object, rng, spec, row.material);
        row.cond = cond;

        TrajectorySequence traj;
        if (row.material == Material::Rigid) {
          traj = rigid::rigid_simulate(object, cond, spec.sim, spec.rigid, spec.num_frames);
          traj.def_grads.clear();  // file stores F/C only for MPM materials
        } else {
          traj = mpm::simulate(object, cond, spec.sim, spec.num_frames);
        }

        char name[32];
        std::snprintf(name, sizeof(name), "traj_%05d.ptrj", a);
        std::string path = (std::filesystem::path(out_dir) / name).string();
        write_trajectory(path, traj, cond, object_weight(object, spec.sim));
        row.file = name;
        row.status = "ok";
      } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
      }
    }
  };

  int workers = std::min(max_threads(), total);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  DatasetResult result;
  std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.jsonl").string();
  std::string skips_path = (std::filesystem::path(out_dir) / "manifest_skips.jsonl").string();
  std::ofstream manifest(manifest_path, std::ios::trunc);
  require(manifest.good(), Errc::IoError, "generate_dataset: cannot write " + manifest_path);
  std::ofstream skips;
  for (const ManifestRow& row : rows) {
    if (row.status == "ok") {
      manifest << manifest_line(row) << "\n";
      result.rows.push_back(row);
    } else {
      if (!skips.is_open()) skips.open(skips_path, std::ios::trunc);
      skips << manifest_line(row) << "\n";
      result.skipped.push_back(row);
    }
  }
  result.manifest_path = manifest_path;
  return result;
}

}  // namespace physdyn::data
