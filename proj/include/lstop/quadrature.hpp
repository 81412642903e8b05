#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lstop {

struct QPoint1 {
  double x, w;
};

/// Gauss-Legendre rule on [0,1], exact for degree 2n-1.
inline std::vector<QPoint1> gauss01(int n) {
  switch (n) {
    case 1:
      return {{0.5, 1.0}};
    case 2: {
      const double d = 0.5 / std::sqrt(3.0);
      return {{0.5 - d, 0.5}, {0.5 + d, 0.5}};
    }
    case 3: {
      const double d = 0.5 * std::sqrt(0.6);
      return {{0.5 - d, 5.0 / 18.0}, {0.5, 8.0 / 18.0}, {0.5 + d, 5.0 / 18.0}};
    }
    case 4: {
      const double a = 0.5 * std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(1.2));
      const double b = 0.5 * std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(1.2));
      const double wa = (18.0 + std::sqrt(30.0)) / 72.0;
      const double wb = (18.0 - std::sqrt(30.0)) / 72.0;
      return {{0.5 - b, wb}, {0.5 - a, wa}, {0.5 + a, wa}, {0.5 + b, wb}};
    }
    case 5: {
      const double a = 0.5 / 3.0 * std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0));
      const double b = 0.5 / 3.0 * std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0));
      const double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 1800.0;
      const double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 1800.0;
      return {{0.5 - b, wb}, {0.5 - a, wa}, {0.5, 64.0 / 225.0}, {0.5 + a, wa}, {0.5 + b, wb}};
    }
    default:
      throw std::invalid_argument("gauss01: order not tabulated");
  }
}

struct QPointTri {
  double l1, l2, w;  // barycentric coords of vertices 1 and 2; w sums to 1
};

/// Degree-2 exact rule on the reference triangle (weights on area 1).
inline const std::array<QPointTri, 3>& tri_rule() {
  static const std::array<QPointTri, 3> r = {{{1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0},
                                              {2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0},
                                              {1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0}}};
  return r;
}

}  // namespace lstop
