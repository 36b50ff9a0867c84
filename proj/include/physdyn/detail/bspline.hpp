#pragma once

#include <cmath>

#include "physdyn/common.hpp"

namespace physdyn::detail {

// Quadratic B-spline over the 3x3x3 node neighborhood. Weight derivatives
// are taken with respect to the particle position and carry the 1/dx
// factors. Second derivatives are piecewise constant.
struct BsplineStencil {
  int base[3];
  double w[3][3];    // [axis][offset]
  double dw[3][3];   // d/dx_axis
  double ddw[3][3];  // d^2/dx_axis^2

  void compute(const Vec3& x, double dx) {
    for (int a = 0; a < 3; ++a) {
      double xs = x[a] / dx;
      int b = static_cast<int>(std::floor(xs - 0.5));
      double fx = xs - b;
      base[a] = b;
      w[a][0] = 0.5 * (1.5 - fx) * (1.5 - fx);
      w[a][1] = 0.75 - (fx - 1.0) * (fx - 1.0);
      w[a][2] = 0.5 * (fx - 0.5) * (fx - 0.5);
      dw[a][0] = (fx - 1.5) / dx;
      dw[a][1] = 2.0 * (1.0 - fx) / dx;
      dw[a][2] = (fx - 0.5) / dx;
      ddw[a][0] = 1.0 / (dx * dx);
      ddw[a][1] = -2.0 / (dx * dx);
      ddw[a][2] = 1.0 / (dx * dx);
    }
  }

  double weight(int i, int j, int k) const { return w[0][i] * w[1][j] * w[2][k]; }

  Vec3 weight_grad(int i, int j, int k) const {
    return Vec3(dw[0][i] * w[1][j] * w[2][k], w[0][i] * dw[1][j] * w[2][k],
                w[0][i] * w[1][j] * dw[2][k]);
  }

  Mat3 weight_hessian(int i, int j, int k) const {
    Mat3 h;
    h(0, 0) = ddw[0][i] * w[1][j] * w[2][k];
    h(1, 1) = w[0][i] * ddw[1][j] * w[2][k];
    h(2, 2) = w[0][i] * w[1][j] * ddw[2][k];
    h(0, 1) = h(1, 0) = dw[0][i] * dw[1][j] * w[2][k];
    h(0, 2) = h(2, 0) = dw[0][i] * w[1][j] * dw[2][k];
    h(1, 2) = h(2, 1) = w[0][i] * dw[1][j] * dw[2][k];
    return h;
  }
};

}  // namespace physdyn::detail
