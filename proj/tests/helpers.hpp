#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "physdyn/mesh.hpp"
#include "physdyn/point_cloud.hpp"
#include "physdyn/rng.hpp"

namespace testutil {

using physdyn::Mat3;
using physdyn::PointCloud;
using physdyn::Rng;
using physdyn::TriMesh;
using physdyn::Vec3;

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite differences of a scalar function of a flat vector.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-6) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double hi = f(x);
    x[i] = keep - h;
    double lo = f(x);
    x[i] = keep;
    grad[i] = (hi - lo) / (2.0 * h);
  }
  return grad;
}

// max relative error between analytic and finite-difference gradients,
// with an absolute floor so near-zero pairs compare absolutely
inline double max_grad_err(const std::vector<double>& analytic, const std::vector<double>& fd,
                           double abs_floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), abs_floor});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

inline PointCloud random_cloud(int n, Rng& rng, const Vec3& lo = Vec3(0.2, 0.2, 0.2),
                               const Vec3& hi = Vec3(0.8, 0.8, 0.8)) {
  PointCloud out;
  out.positions.reserve(n);
  for (int i = 0; i < n; ++i)
    out.positions.emplace_back(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                               rng.uniform(lo.z(), hi.z()));
  return out;
}

// regular lattice filling a box, useful for blobs with known occupancy
inline PointCloud lattice_cloud(int per_axis, const Vec3& lo, const Vec3& hi) {
  PointCloud out;
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j)
      for (int k = 0; k < per_axis; ++k) {
        Vec3 t(per_axis == 1 ? 0.5 : i / double(per_axis - 1),
               per_axis == 1 ? 0.5 : j / double(per_axis - 1),
               per_axis == 1 ? 0.5 : k / double(per_axis - 1));
        out.positions.emplace_back(lo + t.cwiseProduct(hi - lo));
      }
  return out;
}

inline TriMesh unit_cube_mesh() {
  TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  m.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
             {2, 3, 7}, {2, 7, 6}, {1, 2, 6}, {1, 6, 5}, {0, 7, 3}, {0, 4, 7}};
  return m;
}

inline Mat3 random_rotation(Rng& rng) {
  // QR-style orthonormalization of a random Gaussian matrix
  Vec3 a = rng.normal3().normalized();
  Vec3 b = rng.normal3();
  b = (b - b.dot(a) * a).normalized();
  Vec3 c = a.cross(b);
  Mat3 r;
  r.col(0) = a;
  r.col(1) = b;
  r.col(2) = c;
  return r;
}

inline Mat3 random_near_identity(Rng& rng, double scale = 0.2) {
  Mat3 f = Mat3::Identity();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) f(r, c) += scale * (rng.uniform() - 0.5);
  return f;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("physdyn_" + tag + "_" +
                                                     std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

}  // namespace testutil
