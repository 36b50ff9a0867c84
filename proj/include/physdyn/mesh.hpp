#pragma once

#include <array>
#include <string>
#include <vector>

#include "physdyn/point_cloud.hpp"
#include "physdyn/rng.hpp"

namespace physdyn {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // 0-based after loading

  double total_area() const;
};

// Minimal ASCII OBJ reader: v and f records only, 1-based indices,
// triangular faces. Anything else in a face record is an error.
TriMesh load_obj(const std::string& path);

// Area-weighted uniform sampling on the mesh faces.
PointCloud sample_surface_points(const TriMesh& mesh, int n, Rng& rng);

}  // namespace physdyn
