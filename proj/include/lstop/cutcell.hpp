#pragma once

#include <array>
#include <vector>

#include "lstop/dual.hpp"
#include "lstop/hmesh.hpp"

namespace lstop {

template <class T>
struct V2T {
  T x{}, y{};
  friend V2T operator+(const V2T& a, const V2T& b) { return {a.x + b.x, a.y + b.y}; }
  friend V2T operator-(const V2T& a, const V2T& b) { return {a.x - b.x, a.y - b.y}; }
  friend V2T operator*(const T& s, const V2T& a) { return {s * a.x, s * a.y}; }
};

template <class T>
T cross2(const V2T<T>& a, const V2T<T>& b) {
  return a.x * b.y - a.y * b.x;
}

template <class T>
T tri_area(const V2T<T>& a, const V2T<T>& b, const V2T<T>& c) {
  return T(0.5) * cross2(b - a, c - a);  // signed, positive for CCW
}

template <class T>
struct CutTri {
  V2T<T> v[3];  // CCW
  bool solid;   // phi < 0 side
};

template <class T>
struct CutSeg {
  V2T<T> p, q;
  V2T<T> n;       // unit normal from solid into void
  int solid_tri;  // index into tris of a solid triangle adjacent to this segment
};

template <class T>
struct ElementCut {
  std::vector<CutTri<T>> tris;
  std::vector<CutSeg<T>> segs;
};

/// Parametric solid sub-interval [a,b] of an edge with endpoint values
/// phi0 (t=0) and phi1 (t=1); empty (a >= b) when the edge is all void.
template <class T>
struct EdgeInterval {
  T a, b;
  bool empty() const { return !(val(a) < val(b)); }
};

template <class T>
EdgeInterval<T> edge_solid_interval(const T& phi0, const T& phi1) {
  const bool n0 = val(phi0) < 0, n1 = val(phi1) < 0;
  if (n0 && n1) return {T(0.0), T(1.0)};
  if (!n0 && !n1) return {T(0.0), T(0.0)};
  const T t = phi0 / (phi0 - phi1);
  return n0 ? EdgeInterval<T>{T(0.0), t} : EdgeInterval<T>{t, T(1.0)};
}

namespace detail {

/// Zero crossing on an edge, evaluated in a canonical endpoint order so
/// that triangles meeting along a shared edge produce bitwise-identical
/// points regardless of traversal direction.
template <class T>
V2T<T> edge_cut_point(const V2T<T>& a, const T& fa, const V2T<T>& b, const T& fb) {
  const bool swap = val(b.x) < val(a.x) || (val(b.x) == val(a.x) && val(b.y) < val(a.y));
  const V2T<T>& p = swap ? b : a;
  const V2T<T>& q = swap ? a : b;
  const T& fp = swap ? fb : fa;
  const T& fq = swap ? fa : fb;
  const T t = fp / (fp - fq);
  return p + t * (q - p);
}

template <class T>
void cut_triangle(const V2T<T> v[3], const T phi[3], std::vector<CutTri<T>>& tris,
                  std::vector<CutSeg<T>>& segs) {
  const bool neg[3] = {val(phi[0]) < 0, val(phi[1]) < 0, val(phi[2]) < 0};
  if (neg[0] == neg[1] && neg[1] == neg[2]) {
    tris.push_back({{v[0], v[1], v[2]}, neg[0]});
    return;
  }
  // rotate so the odd-signed vertex comes first, preserving orientation
  int o = 0;
  if (neg[1] != neg[0] && neg[1] != neg[2]) o = 1;
  if (neg[2] != neg[0] && neg[2] != neg[1]) o = 2;
  const int u = (o + 1) % 3, w = (o + 2) % 3;
  const V2T<T> pu = edge_cut_point(v[o], phi[o], v[u], phi[u]);
  const V2T<T> pw = edge_cut_point(v[o], phi[o], v[w], phi[w]);

  const int odd_tri = int(tris.size());
  tris.push_back({{v[o], pu, pw}, neg[o]});
  tris.push_back({{pu, v[u], v[w]}, neg[u]});
  const int pair_tri = int(tris.size());  // (pu, v[w], pw) shares the interface edge
  tris.push_back({{pu, v[w], pw}, neg[u]});

  // normal from the linear phi gradient on this triangle (exact for the
  // piecewise linear interface geometry)
  const T det = cross2(v[1] - v[0], v[2] - v[0]);
  const T gx = (phi[1] - phi[0]) * (v[2].y - v[0].y) - (phi[2] - phi[0]) * (v[1].y - v[0].y);
  const T gy = (phi[2] - phi[0]) * (v[1].x - v[0].x) - (phi[1] - phi[0]) * (v[2].x - v[0].x);
  const T nx = gx / det, ny = gy / det;
  const T len = sqrt(nx * nx + ny * ny);
  segs.push_back({pu, pw, {nx / len, ny / len}, neg[o] ? odd_tri : pair_tri});
}

}  // namespace detail

/// Snap a scalar away from zero; a snapped value is a constant (its
/// derivative information is dropped, matching the zero-sensitivity rule
/// for snapped nodes).
template <class T>
T snap_scalar(const T& v, double eps) {
  const double x = val(v);
  if (x >= 0 && x < eps) return T(eps);
  if (x < 0 && x > -eps) return T(-eps);
  return v;
}

/// Decompose a quad with mixed corner signs into phase-tagged triangles and
/// interface segments. Corners are ordered (x0,y0),(x1,y0),(x1,y1),(x0,y1)
/// and values must be snapped (never zero). The quad is first split into
/// four triangles about its centroid, which resolves the bilinear saddle
/// configuration deterministically; the centroid value (corner average) is
/// snapped with the same tolerance.
template <class T>
ElementCut<T> decompose_quad(const Rect& b, const std::array<T, 4>& phi, double snap_eps) {
  ElementCut<T> out;
  const V2T<T> c[4] = {{T(b.x0), T(b.y0)}, {T(b.x1), T(b.y0)}, {T(b.x1), T(b.y1)},
                       {T(b.x0), T(b.y1)}};
  const V2T<T> mid{T(0.5 * (b.x0 + b.x1)), T(0.5 * (b.y0 + b.y1))};
  const T phim = snap_scalar(T(0.25) * (phi[0] + phi[1] + phi[2] + phi[3]), snap_eps);
  for (int k = 0; k < 4; ++k) {
    const int k1 = (k + 1) % 4;
    const V2T<T> v[3] = {c[k], c[k1], mid};
    const T f[3] = {phi[k], phi[k1], phim};
    detail::cut_triangle(v, f, out.tris, out.segs);
  }
  return out;
}

}  // namespace lstop
