#include "physdyn/nn/schedule.hpp"

#include <cmath>

namespace physdyn::nn {

namespace {
constexpr double kHalfPi = 1.57079632679489661923;
constexpr double kShift = 0.008;
}  // namespace

NoiseSchedule::NoiseSchedule(int num_steps) : num_steps_(num_steps) {
  require(num_steps >= 1, Errc::InvalidArgument, "NoiseSchedule: need at least one step");
  alpha_.resize(num_steps + 1);
  sigma_.resize(num_steps + 1);
  auto f = [&](double t) {
    double u = (t / num_steps + kShift) / (1.0 + kShift);
    double c = std::cos(u * kHalfPi);
    return c * c;
  };
  double f0 = f(0.0);
  for (int t = 0; t <= num_steps; ++t) {
    double abar = std::min(1.0, std::max(0.0, f(static_cast<double>(t)) / f0));
    alpha_[t] = std::sqrt(abar);
    sigma_[t] = std::sqrt(1.0 - abar);
  }
}

double NoiseSchedule::alpha(int t) const {
  require(t >= 0 && t <= num_steps_, Errc::InvalidArgument, "NoiseSchedule: t out of range");
  return alpha_[t];
}

double NoiseSchedule::sigma(int t) const {
  require(t >= 0 && t <= num_steps_, Errc::InvalidArgument, "NoiseSchedule: t out of range");
  return sigma_[t];
}

}  // namespace physdyn::nn
