#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lstop/dual.hpp"

namespace lstop {

/// Uniform B-spline of degree p on the integer knots {0, 1, ..., p+1},
/// evaluated by the Cox-de Boor recursion. Zero outside [0, p+1].
template <class T>
T uniform_bspline(int p, T u) {
  if (val(u) < 0.0 || val(u) > double(p + 1)) return T(0.0);
  // N_{i,0} on integer knots: indicator of [i, i+1). The top knot span is
  // closed so that the value at u = p+1 comes out as the left limit (zero
  // for p >= 1, one for p = 0).
  std::array<T, 8> N{};
  for (int i = 0; i <= p; ++i) {
    const bool in = (val(u) >= i && val(u) < i + 1) || (i == p && val(u) == double(p + 1));
    N[i] = T(in ? 1.0 : 0.0);
  }
  for (int k = 1; k <= p; ++k) {
    for (int i = 0; i + k <= p; ++i) {
      // knot differences are all k on a uniform integer knot vector
      N[i] = ((u - T(double(i))) * N[i] + (T(double(i + k + 1)) - u) * N[i + 1]) / T(double(k));
    }
  }
  return N[0];
}

inline double uniform_bspline_value(int p, double u) { return uniform_bspline<double>(p, u); }

/// d/du of the uniform degree-p B-spline on integer knots.
inline double uniform_bspline_deriv(int p, double u) {
  if (p == 0) return 0.0;
  return uniform_bspline_value(p - 1, u) - uniform_bspline_value(p - 1, u - 1.0);
}

/// Two-scale relation: N_p(u) = sum_j c_j N_p(2u - j), c_j = 2^-p binom(p+1, j).
/// The p+2 coefficients sum to 2.
inline std::vector<double> subdivision_coeffs(int p) {
  if (p < 0) throw std::invalid_argument("subdivision_coeffs: degree must be >= 0");
  std::vector<double> c(p + 2);
  double binom = 1.0;
  const double scale = std::pow(0.5, p);
  for (int j = 0; j <= p + 1; ++j) {
    c[j] = scale * binom;
    binom = binom * double(p + 1 - j) / double(j + 1);
  }
  return c;
}

/// Values of the p+1 basis functions that are non-zero on one knot span,
/// at local coordinate t in [0,1]. out[k] is the value of the function
/// anchored k-p spans to the left of the span (k = 0 is the leftmost).
template <class T>
void segment_values(int p, T t, T* out) {
  switch (p) {
    case 1: {
      out[0] = T(1.0) - t;
      out[1] = t;
      return;
    }
    case 2: {
      const T s = T(1.0) - t;
      out[0] = T(0.5) * s * s;
      out[1] = T(0.5) + t * s;  // -t^2 + t + 1/2
      out[2] = T(0.5) * t * t;
      return;
    }
    case 3: {
      const T s = T(1.0) - t;
      const T t2 = t * t;
      const T s2 = s * s;
      out[0] = s2 * s / T(6.0);
      out[1] = (T(4.0) - T(6.0) * t2 + T(3.0) * t2 * t) / T(6.0);
      out[2] = (T(4.0) - T(6.0) * s2 + T(3.0) * s2 * s) / T(6.0);
      out[3] = t2 * t / T(6.0);
      return;
    }
    default:
      for (int k = 0; k <= p; ++k) out[k] = uniform_bspline<T>(p, t + T(double(p - k)));
  }
}

/// d/dt companions of segment_values.
inline void segment_derivs(int p, double t, double* out) {
  switch (p) {
    case 1:
      out[0] = -1.0;
      out[1] = 1.0;
      return;
    case 2:
      out[0] = t - 1.0;
      out[1] = 1.0 - 2.0 * t;
      out[2] = t;
      return;
    case 3: {
      const double s = 1.0 - t;
      out[0] = -0.5 * s * s;
      out[1] = -2.0 * t + 1.5 * t * t;
      out[2] = 2.0 * s - 1.5 * s * s;
      out[3] = 0.5 * t * t;
      return;
    }
    default:
      for (int k = 0; k <= p; ++k) out[k] = uniform_bspline_deriv(p, t + double(p - k));
  }
}

/// Value at x of the uniform B-spline with integer anchor on a level-l grid:
/// support [origin + anchor*h, origin + (anchor+p+1)*h] with h = h0 / 2^l.
inline double eval_univariate(int p, int anchor, int level, double x, double origin, double h0) {
  const double h = h0 / double(1 << level);
  return uniform_bspline_value(p, (x - origin) / h - double(anchor));
}

}  // namespace lstop
