#include "physdyn/mesh.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace physdyn {

namespace {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

double TriMesh::total_area() const {
  double area = 0.0;
  for (const auto& f : faces)
    area += triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]);
  return area;
}

TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::IoError, "load_obj: cannot open " + path);

  TriMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      require(static_cast<bool>(ss >> x >> y >> z), Errc::IoError,
              "load_obj: malformed vertex at line " + std::to_string(line_no));
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::array<int, 3> idx{};
      int count = 0;
      std::string tok;
      while (ss >> tok) {
        require(count < 3, Errc::IoError,
                "load_obj: non-triangular face at line " + std::to_string(line_no));
        // accept v, v/vt, v/vt/vn, v//vn; only the vertex index is used
        int v = std::atoi(tok.c_str());
        require(v >= 1 && v <= static_cast<int>(mesh.vertices.size()), Errc::IoError,
                "load_obj: face index out of range at line " + std::to_string(line_no));
        idx[count++] = v - 1;
      }
      require(count == 3, Errc::IoError,
              "load_obj: face with fewer than 3 vertices at line " + std::to_string(line_no));
      mesh.faces.push_back(idx);
    }
    // all other records (vn, vt, o, g, s, comments, mtl) are ignored
  }
  require(!mesh.faces.empty(), Errc::IoError, "load_obj: no faces in " + path);
  return mesh;
}

PointCloud sample_surface_points(const TriMesh& mesh, int n, Rng& rng) {
  require(n >= 1, Errc::InvalidArgument, "sample_surface_points: n must be >= 1");
  require(!mesh.faces.empty(), Errc::InvalidArgument, "sample_surface_points: mesh has no faces");

  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    cumulative.push_back(total);
  }
  require(total > 0.0, Errc::DegenerateInput, "sample_surface_points: zero total surface area");

  PointCloud out;
  out.positions.reserve(n);
  for (int s = 0; s < n; ++s) {
    double u = rng.uniform() * total;
    auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t face = std::min<std::size_t>(cumulative.size() - 1, it - cumulative.begin());
    const auto& f = mesh.faces[face];
    // uniform barycentric via the sqrt trick
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    Vec3 p = (1.0 - r1) * mesh.vertices[f[0]] + r1 * (1.0 - r2) * mesh.vertices[f[1]] +
             r1 * r2 * mesh.vertices[f[2]];
    out.positions.push_back(p);
  }
  return out;
}

}  // namespace physdyn
