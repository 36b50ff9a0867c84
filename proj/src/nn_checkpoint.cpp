#include "physdyn/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace physdyn::nn {

static_assert(std::endian::native == std::endian::little,
              "PDMC writer assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'P', 'D', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::IoError, "save_checkpoint: cannot open " + path);

  out.write(kMagic, 4);
  std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);

  std::int32_t ints[8] = {cfg.layers, cfg.latent,        cfg.heads,  cfg.cond_dim,
                          cfg.mlp_ratio, cfg.points, cfg.frames, cfg.diffusion_steps};
  double doubles[4] = {cfg.e_log_min, cfg.e_log_max, cfg.nu_min, cfg.nu_max};
  out.write(reinterpret_cast<const char*>(ints), sizeof(ints));
  out.write(reinterpret_cast<const char*>(doubles), sizeof(doubles));

  std::uint32_t count = static_cast<std::uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  std::vector<float> buf;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, mat] = params.entry(i);
    std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&name_len), 4);
    out.write(name.data(), name_len);
    std::uint32_t rows = static_cast<std::uint32_t>(mat.rows());
    std::uint32_t cols = static_cast<std::uint32_t>(mat.cols());
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    buf.resize(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        buf[static_cast<std::size_t>(r) * cols + c] = static_cast<float>(mat(r, c));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  require(out.good(), Errc::IoError, "save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoError, "load_checkpoint: cannot open " + path);
  auto read = [&](void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    require(in.gcount() == static_cast<std::streamsize>(n), Errc::FormatTruncated,
            std::string("load_checkpoint: truncated in ") + what);
  };

  char magic[4];
  read(magic, 4, "header");
  if (std::memcmp(magic, kMagic, 4) != 0)
    fail(Errc::FormatMagic, "load_checkpoint: " + path + " is not a PDMC file");
  std::uint32_t version;
  read(&version, 4, "header");
  if (version != kVersion)
    fail(Errc::FormatVersion,
         "load_checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ck;
  std::int32_t ints[8];
  double doubles[4];
  read(ints, sizeof(ints), "config");
  read(doubles, sizeof(doubles), "config");
  ck.cfg.layers = ints[0];
  ck.cfg.latent = ints[1];
  ck.cfg.heads = ints[2];
  ck.cfg.cond_dim = ints[3];
  ck.cfg.mlp_ratio = ints[4];
  ck.cfg.points = ints[5];
  ck.cfg.frames = ints[6];
  ck.cfg.diffusion_steps = ints[7];
  ck.cfg.e_log_min = doubles[0];
  ck.cfg.e_log_max = doubles[1];
  ck.cfg.nu_min = doubles[2];
  ck.cfg.nu_max = doubles[3];
  ck.cfg.validate();

  std::uint32_t count;
  read(&count, 4, "blocks");
  std::vector<float> buf;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len;
    read(&name_len, 4, "blocks");
    require(name_len <= 256, Errc::FormatTruncated, "load_checkpoint: bad block name length");
    std::string name(name_len, '\0');
    read(name.data(), name_len, "blocks");
    std::uint32_t rows, cols;
    read(&rows, 4, "blocks");
    read(&cols, 4, "blocks");
    buf.resize(static_cast<std::size_t>(rows) * cols);
    read(buf.data(), buf.size() * sizeof(float), name.c_str());
    Mat m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        m(r, c) = buf[static_cast<std::size_t>(r) * cols + c];
    ck.params.add(name, std::move(m));
  }
  return ck;
}

}  // namespace physdyn::nn
