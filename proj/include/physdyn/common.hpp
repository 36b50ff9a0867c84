#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace physdyn {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error codes double as CLI exit-code categories and as distinct
// conditions for the binary file formats.
enum class Errc {
  InvalidArgument,
  DegenerateInput,
  ConfigError,
  SimulationError,
  IoError,
  FormatMagic,
  FormatVersion,
  FormatTruncated,
  ShapeMismatch,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

// Worker cap shared by the dataset pool and the tensor kernels.
// PHYSDYN_THREADS overrides hardware concurrency.
int max_threads();

// Static contiguous split of [0, n) over at most max_threads() workers.
// Each index is processed exactly once with identical per-index arithmetic,
// so results do not depend on the worker count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk);

}  // namespace physdyn
