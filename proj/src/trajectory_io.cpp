#include "physdyn/trajectory_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace physdyn::data {

static_assert(std::endian::native == std::endian::little,
              "PTRJ writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'T', 'R', 'J'};
constexpr std::uint32_t kVersion = 1;

struct Reader {
  std::ifstream in;
  std::string path;

  void read_bytes(void* dst, std::size_t count, const char* section) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
    if (in.gcount() != static_cast<std::streamsize>(count))
      fail(Errc::FormatTruncated,
           "read_trajectory: " + path + " truncated in section '" + section + "'");
  }

  template <typename T>
  T read_scalar(const char* section) {
    T value;
    read_bytes(&value, sizeof(T), section);
    return value;
  }

  void read_f32(std::vector<float>& buf, const char* section) {
    read_bytes(buf.data(), buf.size() * sizeof(float), section);
  }
};

void write_f32(std::ofstream& out, const float* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
}

}  // namespace

void write_trajectory(const std::string& path, const TrajectorySequence& traj,
                      const PhysicsCondition& cond, double object_weight) {
  traj.validate();
  std::uint32_t n = static_cast<std::uint32_t>(traj.num_points());
  std::uint32_t f = static_cast<std::uint32_t>(traj.num_frames());
  bool has_fc = traj.has_def_grads() && traj.has_affines();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::IoError, "write_trajectory: cannot open " + path);

  out.write(kMagic, 4);
  std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&f), 4);
  std::uint8_t material = static_cast<std::uint8_t>(cond.material);
  std::uint8_t flags = has_fc ? 1 : 0;
  std::uint16_t pad = 0;
  out.write(reinterpret_cast<const char*>(&material), 1);
  out.write(reinterpret_cast<const char*>(&flags), 1);
  out.write(reinterpret_cast<const char*>(&pad), 2);

  float condition[11] = {
      static_cast<float>(cond.force.x()),      static_cast<float>(cond.force.y()),
      static_cast<float>(cond.force.z()),      static_cast<float>(cond.drag_point.x()),
      static_cast<float>(cond.drag_point.y()), static_cast<float>(cond.drag_point.z()),
      static_cast<float>(cond.youngs_modulus), static_cast<float>(cond.poisson_ratio),
      static_cast<float>(cond.floor_height),   static_cast<float>(traj.frame_dt),
      static_cast<float>(object_weight)};
  write_f32(out, condition, 11);

  std::vector<float> buf;
  buf.reserve(static_cast<std::size_t>(n) * 3);
  auto flush_frame = [&](const std::vector<Vec3>& pts) {
    buf.clear();
    for (const Vec3& p : pts) {
      buf.push_back(static_cast<float>(p.x()));
      buf.push_back(static_cast<float>(p.y()));
      buf.push_back(static_cast<float>(p.z()));
    }
    write_f32(out, buf.data(), buf.size());
  };
  flush_frame(traj.initial.positions);
  for (const auto& frame : traj.frames) flush_frame(frame);

  if (has_fc) {
    auto flush_mats = [&](const std::vector<std::vector<Mat3>>& mats) {
      for (const auto& frame : mats) {
        buf.clear();
        for (const Mat3& m : frame)
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) buf.push_back(static_cast<float>(m(r, c)));
        write_f32(out, buf.data(), buf.size());
      }
    };
    flush_mats(traj.def_grads);
    flush_mats(traj.affines);
  }
  require(out.good(), Errc::IoError, "write_trajectory: write failed for " + path);
}

TrajectoryRecord read_trajectory(const std::string& path) {
  Reader r{std::ifstream(path, std::ios::binary), path};
  require(r.in.good(), Errc::IoError, "read_trajectory: cannot open " + path);

  char magic[4];
  r.read_bytes(magic, 4, "header");
  if (std::memcmp(magic, kMagic, 4) != 0)
    fail(Errc::FormatMagic, "read_trajectory: " + path + " is not a PTRJ file");
  auto version = r.read_scalar<std::uint32_t>("header");
  if (version != kVersion)
    fail(Errc::FormatVersion,
         "read_trajectory: " + path + " has unsupported version " + std::to_string(version));

  auto n = r.read_scalar<std::uint32_t>("header");
  auto f = r.read_scalar<std::uint32_t>("header");
  auto material = r.read_scalar<std::uint8_t>("header");
  auto flags = r.read_scalar<std::uint8_t>("header");
  r.read_scalar<std::uint16_t>("header");
  require(n >= 1, Errc::FormatTruncated, "read_trajectory: zero points in " + path);
  require(material <= 3, Errc::FormatTruncated, "read_trajectory: bad material id in " + path);

  std::vector<float> condition(11);
  r.read_f32(condition, "condition");

  TrajectoryRecord rec;
  rec.cond.force = Vec3(condition[0], condition[1], condition[2]);
  rec.cond.drag_point = Vec3(condition[3], condition[4], condition[5]);
  rec.cond.youngs_modulus = condition[6];
  rec.cond.poisson_ratio = condition[7];
  rec.cond.floor_height = condition[8];
  rec.cond.material = static_cast<Material>(material);
  rec.traj.frame_dt = condition[9];
  rec.object_weight = condition[10];

  std::vector<float> buf(static_cast<std::size_t>(n) * 3);
  auto load_frame = [&](std::vector<Vec3>& pts) {
    r.read_f32(buf, "positions");
    pts.resize(n);
    for (std::uint32_t i = 0; i < n; ++i)
      pts[i] = Vec3(buf[i * 3], buf[i * 3 + 1], buf[i * 3 + 2]);
  };
  load_frame(rec.traj.initial.positions);
  rec.traj.frames.resize(f);
  for (std::uint32_t i = 0; i < f; ++i) load_frame(rec.traj.frames[i]);

  if (flags & 1) {
    std::vector<float> mbuf(static_cast<std::size_t>(n) * 9);
    auto load_mats = [&](std::vector<std::vector<Mat3>>& mats, const char* section) {
      mats.resize(f);
      for (std::uint32_t i = 0; i < f; ++i) {
        r.read_f32(mbuf, section);
        mats[i].resize(n);
        for (std::uint32_t p = 0; p < n; ++p)
          for (int row = 0; row < 3; ++row)
            for (int col = 0; col < 3; ++col)
              mats[i][p](row, col) = mbuf[p * 9 + row * 3 + col];
      }
    };
    load_mats(rec.traj.def_grads, "def_grads");
    load_mats(rec.traj.affines, "affines");
  }
  return rec;
}

}  // namespace physdyn::data
