#pragma once

#include <array>
#include <functional>

#include "lstop/bspline.hpp"
#include "lstop/cutcell.hpp"
#include "lstop/geom.hpp"
#include "lstop/quadrature.hpp"

namespace lstop {

struct ElasticParams {
  double nu = 0.3;
  bool plane_stress = true;
  double gammaN_mult = 100.0;  // gamma_N = mult * E0 / h
  double gammaG = 0.005;
  double spring_scale = 1.0;  // island spring on/off multiplier
};

/// Isotropic constitutive entries in Voigt order (sxx, syy, txy) with
/// engineering shear strain.
template <class T>
struct DMat {
  T c11, c12, c33;
};

template <class T>
DMat<T> make_D(const ElasticParams& ep, const T& E) {
  const double nu = ep.nu;
  if (ep.plane_stress) {
    const T f = E / T(1.0 - nu * nu);
    return {f, T(nu) * f, T(0.5 * (1.0 - nu)) * f};
  }
  const T f = E / T((1.0 + nu) * (1.0 - 2.0 * nu));
  return {T(1.0 - nu) * f, T(nu) * f, T(0.5 * (1.0 - 2.0 * nu)) * f};
}

/// Local design data of one element: tensor-product coefficients of the
/// design field restricted to the element (extraction applied outside).
template <class T>
struct DesignLocal {
  int p = 2;
  Rect bbox;
  SchemeParams scheme;
  std::array<T, 16> t{};

  T s_at(const T& tx, const T& ty) const {
    T Nx[4], Ny[4];
    segment_values(p, tx, Nx);
    segment_values(p, ty, Ny);
    T v(0.0);
    for (int b = 0; b <= p; ++b)
      for (int a = 0; a <= p; ++a) v += t[a + (p + 1) * b] * Nx[a] * Ny[b];
    return v;
  }
  T youngs_at(const T& tx, const T& ty) const { return youngs_solid(scheme, s_at(tx, ty)); }
  T rho_at(const T& tx, const T& ty) const { return rho_solid(scheme, s_at(tx, ty)); }
};

/// Bilinear state shape functions of an element at local coords, with
/// physical-space gradients. Node order is the tensor order of the basis
/// extraction columns: (0,0), (1,0), (0,1), (1,1).
template <class T>
struct Shape4 {
  T N[4];
  T gx[4], gy[4];
};

template <class T>
Shape4<T> shape_quad(const Rect& b, const T& tx, const T& ty) {
  Shape4<T> s;
  const T mx = T(1.0) - tx, my = T(1.0) - ty;
  s.N[0] = mx * my;
  s.N[1] = tx * my;
  s.N[2] = mx * ty;
  s.N[3] = tx * ty;
  const double wx = 1.0 / b.width(), wy = 1.0 / b.height();
  s.gx[0] = T(-wx) * my;
  s.gx[1] = T(wx) * my;
  s.gx[2] = T(-wx) * ty;
  s.gx[3] = T(wx) * ty;
  s.gy[0] = T(-wy) * mx;
  s.gy[1] = T(-wy) * tx;
  s.gy[2] = T(wy) * mx;
  s.gy[3] = T(wy) * tx;
  return s;
}

/// Dense local system over at most 16 scalar DOFs.
template <class T>
struct LocalSystem {
  int n = 0;
  std::array<T, 256> K{};
  std::array<T, 16> f{};
  T& Kat(int i, int j) { return K[i * n + j]; }
  const T& Kat(int i, int j) const { return K[i * n + j]; }

  /// lambda' * (K u - f) for fixed vectors (gradient-pass contraction).
  T virtual_work(const double* lam, const double* u) const {
    T acc(0.0);
    for (int i = 0; i < n; ++i) {
      T row(0.0);
      for (int j = 0; j < n; ++j) row += Kat(i, j) * T(u[j]);
      acc += T(lam[i]) * (row - f[i]);
    }
    return acc;
  }
};

/// Voigt strain rows of the 8 bilinear displacement DOFs at one point.
template <class T>
void strain_rows(const Shape4<T>& sh, T exx[8], T eyy[8], T gxy[8]) {
  for (int k = 0; k < 4; ++k) {
    exx[2 * k] = sh.gx[k];
    exx[2 * k + 1] = T(0.0);
    eyy[2 * k] = T(0.0);
    eyy[2 * k + 1] = sh.gy[k];
    gxy[2 * k] = sh.gy[k];
    gxy[2 * k + 1] = sh.gx[k];
  }
}

namespace detail {

template <class T>
void accumulate_bulk_point(LocalSystem<T>& out, const Shape4<T>& sh, const DMat<T>& D,
                           const T& w) {
  T exx[8], eyy[8], gxy[8];
  strain_rows(sh, exx, eyy, gxy);
  T sxx[8], syy[8], txy[8];
  for (int j = 0; j < 8; ++j) {
    sxx[j] = D.c11 * exx[j] + D.c12 * eyy[j];
    syy[j] = D.c12 * exx[j] + D.c11 * eyy[j];
    txy[j] = D.c33 * gxy[j];
  }
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      out.Kat(i, j) += w * (exx[i] * sxx[j] + eyy[i] * syy[j] + gxy[i] * txy[j]);
}

template <class T>
void accumulate_mass_point(LocalSystem<T>& out, const Shape4<T>& sh, const T& w) {
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const T m = w * sh.N[i] * sh.N[j];
      out.Kat(2 * i, 2 * j) += m;
      out.Kat(2 * i + 1, 2 * j + 1) += m;
    }
}

}  // namespace detail

/// Bulk elasticity over one solid triangle of a cut element (degree-2 rule).
template <class T>
void bulk_tri(LocalSystem<T>& out, const Rect& b, const V2T<T> v[3], const DesignLocal<T>& mat,
              const ElasticParams& ep) {
  out.n = 8;
  const T area = tri_area(v[0], v[1], v[2]);
  for (const QPointTri& q : tri_rule()) {
    const T l0 = T(1.0 - q.l1 - q.l2);
    const T x = l0 * v[0].x + T(q.l1) * v[1].x + T(q.l2) * v[2].x;
    const T y = l0 * v[0].y + T(q.l1) * v[1].y + T(q.l2) * v[2].y;
    const T tx = (x - T(b.x0)) / T(b.width());
    const T ty = (y - T(b.y0)) / T(b.height());
    const Shape4<T> sh = shape_quad(b, tx, ty);
    const DMat<T> D = make_D(ep, mat.youngs_at(tx, ty));
    detail::accumulate_bulk_point(out, sh, D, T(q.w) * area);
  }
}

/// Island spring term over one solid triangle: gamma_k = gamma_spring * k_spring.
template <class T>
void spring_tri(LocalSystem<T>& out, const Rect& b, const V2T<T> v[3], double gamma_k) {
  out.n = 8;
  if (gamma_k == 0.0) return;
  const T area = tri_area(v[0], v[1], v[2]);
  for (const QPointTri& q : tri_rule()) {
    const T l0 = T(1.0 - q.l1 - q.l2);
    const T x = l0 * v[0].x + T(q.l1) * v[1].x + T(q.l2) * v[2].x;
    const T y = l0 * v[0].y + T(q.l1) * v[1].y + T(q.l2) * v[2].y;
    const T tx = (x - T(b.x0)) / T(b.width());
    const T ty = (y - T(b.y0)) / T(b.height());
    detail::accumulate_mass_point(out, shape_quad(b, tx, ty), T(q.w * gamma_k) * area);
  }
}

/// The four centroid triangles of a full element. Uncut elements integrate
/// over these with the same rule as cut ones, so the discrete functionals
/// stay continuous when an element's phase flips.
template <class T>
std::array<std::array<V2T<T>, 3>, 4> quad_fan(const Rect& b) {
  const V2T<T> c[4] = {{T(b.x0), T(b.y0)}, {T(b.x1), T(b.y0)}, {T(b.x1), T(b.y1)},
                       {T(b.x0), T(b.y1)}};
  const V2T<T> mid{T(0.5 * (b.x0 + b.x1)), T(0.5 * (b.y0 + b.y1))};
  return {{{c[0], c[1], mid}, {c[1], c[2], mid}, {c[2], c[3], mid}, {c[3], c[0], mid}}};
}

/// Bulk elasticity over a full (uncut solid) element.
template <class T>
void bulk_quad(LocalSystem<T>& out, const Rect& b, const DesignLocal<T>& mat,
               const ElasticParams& ep, int /*nq*/) {
  out.n = 8;
  for (const auto& tri : quad_fan<T>(b)) bulk_tri(out, b, tri.data(), mat, ep);
}

template <class T>
void spring_quad(LocalSystem<T>& out, const Rect& b, double gamma_k) {
  out.n = 8;
  if (gamma_k == 0.0) return;
  for (const auto& tri : quad_fan<T>(b)) spring_tri(out, b, tri.data(), gamma_k);
}

/// Symmetric-variant Nitsche terms on a segment with outward normal n
/// (from the solid into the constrained side). fix_mask selects the
/// constrained displacement components (bit 0 = x, bit 1 = y); uD supplies
/// prescribed values at physical points (null means homogeneous).
template <class T>
void nitsche_segment(LocalSystem<T>& out, const Rect& b, const V2T<T>& p, const V2T<T>& q,
                     const V2T<T>& n, const DesignLocal<T>& mat, const ElasticParams& ep,
                     double gammaN, int fix_mask,
                     const std::function<void(double, double, double*, double*)>& uD) {
  out.n = 8;
  const T dx = q.x - p.x, dy = q.y - p.y;
  const T len = sqrt(dx * dx + dy * dy);
  if (val(len) <= 0.0) return;
  for (const QPoint1& g : gauss01(2)) {
    const T x = p.x + T(g.x) * dx, y = p.y + T(g.x) * dy;
    const T tx = (x - T(b.x0)) / T(b.width());
    const T ty = (y - T(b.y0)) / T(b.height());
    const Shape4<T> sh = shape_quad(b, tx, ty);
    const DMat<T> D = make_D(ep, mat.youngs_at(tx, ty));
    T exx[8], eyy[8], gxy[8];
    strain_rows(sh, exx, eyy, gxy);
    // traction rows t(j) = sigma(N_j e_c) . n
    T trx[8], try_[8];
    for (int j = 0; j < 8; ++j) {
      const T sxx = D.c11 * exx[j] + D.c12 * eyy[j];
      const T syy = D.c12 * exx[j] + D.c11 * eyy[j];
      const T txy = D.c33 * gxy[j];
      trx[j] = sxx * n.x + txy * n.y;
      try_[j] = txy * n.x + syy * n.y;
    }
    double ud[2] = {0.0, 0.0};
    if (uD) uD(val(x), val(y), &ud[0], &ud[1]);
    const T w = T(g.w) * len;
    for (int d = 0; d < 2; ++d) {
      if (!(fix_mask & (1 << d))) continue;
      const T* tr = d == 0 ? trx : try_;
      for (int i = 0; i < 8; ++i) {
        const int ci = i % 2;
        const T Ni = sh.N[i / 2];
        const T vi = ci == d ? Ni : T(0.0);  // test displacement component d
        for (int j = 0; j < 8; ++j) {
          const int cj = j % 2;
          const T Nj = sh.N[j / 2];
          const T uj = cj == d ? Nj : T(0.0);
          out.Kat(i, j) += w * (-vi * tr[j] - tr[i] * uj + T(gammaN) * vi * uj);
        }
        out.f[i] += w * (-tr[i] + T(gammaN) * vi) * T(ud[d]);
      }
    }
  }
}

/// Traction load over a boundary sub-segment.
template <class T>
void traction_segment(LocalSystem<T>& out, const Rect& b, const V2T<T>& p, const V2T<T>& q,
                      double tx_load, double ty_load) {
  out.n = 8;
  const T dx = q.x - p.x, dy = q.y - p.y;
  const T len = sqrt(dx * dx + dy * dy);
  if (val(len) <= 0.0) return;
  for (const QPoint1& g : gauss01(2)) {
    const T x = p.x + T(g.x) * dx, y = p.y + T(g.x) * dy;
    const T tx = (x - T(b.x0)) / T(b.width());
    const T ty = (y - T(b.y0)) / T(b.height());
    const Shape4<T> sh = shape_quad(b, tx, ty);
    const T w = T(g.w) * len;
    for (int k = 0; k < 4; ++k) {
      out.f[2 * k] += w * sh.N[k] * T(tx_load);
      out.f[2 * k + 1] += w * sh.N[k] * T(ty_load);
    }
  }
}

/// Face-oriented ghost stabilization between two elements sharing a face
/// (fixed geometry; only the material carries design dependence). DOFs 0..7
/// belong to side A, 8..15 to side B; the penalized quantity is the
/// symmetrized strain-jump / stress-jump virtual work.
template <class T>
void ghost_face(LocalSystem<T>& out, const Rect& ba, const Rect& bb, const V2T<double>& p,
                const V2T<double>& q, const V2T<double>& nf, const DesignLocal<T>& mat_a,
                const ElasticParams& ep, double h_gamma) {
  out.n = 16;
  const double len = std::hypot(q.x - p.x, q.y - p.y);
  if (len <= 0.0) return;
  for (const QPoint1& g : gauss01(2)) {
    const double x = p.x + g.x * (q.x - p.x), y = p.y + g.x * (q.y - p.y);
    const T txa((x - ba.x0) / ba.width()), tya((y - ba.y0) / ba.height());
    const Shape4<T> sha = shape_quad(ba, txa, tya);
    const Shape4<T> shb =
        shape_quad(bb, T((x - bb.x0) / bb.width()), T((y - bb.y0) / bb.height()));
    const DMat<T> D = make_D(ep, mat_a.youngs_at(txa, tya));

    // jump strain rows over the 16 dofs
    T exx[16], eyy[16], gxy[16];
    {
      T ax[8], ay[8], ag[8];
      strain_rows(sha, ax, ay, ag);
      T bx[8], by[8], bg[8];
      strain_rows(shb, bx, by, bg);
      for (int k = 0; k < 8; ++k) {
        exx[k] = ax[k];
        eyy[k] = ay[k];
        gxy[k] = ag[k];
        exx[8 + k] = -bx[k];
        eyy[8 + k] = -by[k];
        gxy[8 + k] = -bg[k];
      }
    }
    // eps.n and sigma.n jump vectors (tensor shear = gxy/2)
    T enx[16], eny[16], snx[16], sny[16];
    for (int j = 0; j < 16; ++j) {
      enx[j] = exx[j] * T(nf.x) + T(0.5) * gxy[j] * T(nf.y);
      eny[j] = T(0.5) * gxy[j] * T(nf.x) + eyy[j] * T(nf.y);
      const T sxx = D.c11 * exx[j] + D.c12 * eyy[j];
      const T syy = D.c12 * exx[j] + D.c11 * eyy[j];
      const T txy = D.c33 * gxy[j];
      snx[j] = sxx * T(nf.x) + txy * T(nf.y);
      sny[j] = txy * T(nf.x) + syy * T(nf.y);
    }
    const T w = T(g.w * len * h_gamma);
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j)
        out.Kat(i, j) += w * T(0.5) *
                         (enx[i] * snx[j] + eny[i] * sny[j] + snx[i] * enx[j] + sny[i] * eny[j]);
  }
}

/// Strain energy density integral over a solid triangle: 1/2 int eps:sigma.
template <class T>
T strain_energy_tri(const Rect& b, const V2T<T> v[3], const DesignLocal<T>& mat,
                    const ElasticParams& ep, const double u8[8]) {
  const T area = tri_area(v[0], v[1], v[2]);
  T acc(0.0);
  for (const QPointTri& q : tri_rule()) {
    const T l0 = T(1.0 - q.l1 - q.l2);
    const T x = l0 * v[0].x + T(q.l1) * v[1].x + T(q.l2) * v[2].x;
    const T y = l0 * v[0].y + T(q.l1) * v[1].y + T(q.l2) * v[2].y;
    const T tx = (x - T(b.x0)) / T(b.width());
    const T ty = (y - T(b.y0)) / T(b.height());
    const Shape4<T> sh = shape_quad(b, tx, ty);
    const DMat<T> D = make_D(ep, mat.youngs_at(tx, ty));
    T exx(0.0), eyy(0.0), gxy(0.0);
    for (int k = 0; k < 4; ++k) {
      exx += sh.gx[k] * T(u8[2 * k]);
      eyy += sh.gy[k] * T(u8[2 * k + 1]);
      gxy += sh.gy[k] * T(u8[2 * k]) + sh.gx[k] * T(u8[2 * k + 1]);
    }
    const T dens = exx * (D.c11 * exx + D.c12 * eyy) + eyy * (D.c12 * exx + D.c11 * eyy) +
                   gxy * (D.c33 * gxy);
    acc += T(q.w) * area * T(0.5) * dens;
  }
  return acc;
}

template <class T>
T strain_energy_quad(const Rect& b, const DesignLocal<T>& mat, const ElasticParams& ep,
                     const double u8[8], int /*nq*/) {
  T acc(0.0);
  for (const auto& tri : quad_fan<T>(b)) acc += strain_energy_tri(b, tri.data(), mat, ep, u8);
  return acc;
}

/// Mass of a solid triangle: int rho.
template <class T>
T mass_tri(const Rect& b, const V2T<T> v[3], const DesignLocal<T>& mat) {
  const T area = tri_area(v[0], v[1], v[2]);
  T acc(0.0);
  for (const QPointTri& q : tri_rule()) {
    const T l0 = T(1.0 - q.l1 - q.l2);
    const T x = l0 * v[0].x + T(q.l1) * v[1].x + T(q.l2) * v[2].x;
    const T y = l0 * v[0].y + T(q.l1) * v[1].y + T(q.l2) * v[2].y;
    acc += T(q.w) * area * mat.rho_at((x - T(b.x0)) / T(b.width()), (y - T(b.y0)) / T(b.height()));
  }
  return acc;
}

template <class T>
T mass_quad(const Rect& b, const DesignLocal<T>& mat, int /*nq*/) {
  T acc(0.0);
  for (const auto& tri : quad_fan<T>(b)) acc += mass_tri(b, tri.data(), mat);
  return acc;
}

/// Level set regularization penalties over one element (fixed geometry).
/// The neighborhood weight w is interpolated bilinearly from the corner
/// level-of-neighborhood values (frozen data).
struct RegParams {
  double phi_target = 1.0;
  double grad_target = 0.75;
  double gamma_I = 4.61;
  int I_max = 1;
  double alpha1 = 0.5, alpha2 = 0.5, alpha3 = 0.5;
};

template <class T>
T penalty_element(const Rect& b, const DesignLocal<T>& mat, const RegParams& rp,
                  const std::array<double, 4>& corner_I, int nq, T* p_phi, T* p_grad) {
  T acc_phi(0.0), acc_grad(0.0);
  const double jac = b.area();
  const SchemeParams& sp = mat.scheme;
  for (const QPoint1& qx : gauss01(nq))
    for (const QPoint1& qy : gauss01(nq)) {
      const T tx(qx.x), ty(qy.x);
      // phi and its spatial gradient through the scheme map
      T Nx[4], Ny[4], dNx[4], dNy[4];
      segment_values(mat.p, tx, Nx);
      segment_values(mat.p, ty, Ny);
      {
        double tmp[4];
        segment_derivs(mat.p, qx.x, tmp);
        for (int k = 0; k <= mat.p; ++k) dNx[k] = T(tmp[k]);
        segment_derivs(mat.p, qy.x, tmp);
        for (int k = 0; k <= mat.p; ++k) dNy[k] = T(tmp[k]);
      }
      T s(0.0), sx(0.0), sy(0.0);
      for (int bb = 0; bb <= mat.p; ++bb)
        for (int aa = 0; aa <= mat.p; ++aa) {
          const T& c = mat.t[aa + (mat.p + 1) * bb];
          s += c * Nx[aa] * Ny[bb];
          sx += c * dNx[aa] * Ny[bb];
          sy += c * Nx[aa] * dNy[bb];
        }
      const T phi = phi_of_s(sp, s);
      const double scale = sp.scheme == DesignScheme::Plain ? 1.0 : -sp.phi_scale;
      const T phix = T(scale / b.width()) * sx;
      const T phiy = T(scale / b.height()) * sy;

      const double mx = 1.0 - qx.x, my = 1.0 - qy.x;
      const double Iv = mx * my * corner_I[0] + qx.x * my * corner_I[1] +
                        qx.x * qy.x * corner_I[2] + mx * qy.x * corner_I[3];
      const double w = interface_weight(Iv, rp.I_max, rp.gamma_I);
      const double sgn = val(phi) >= 0 ? 1.0 : -1.0;

      const T dev = phi / T(rp.phi_target) - T(sgn);
      // smoothing floor keeps the norm differentiable where the design
      // saturates and the level set field is exactly flat
      const double geps = 1e-12 * rp.grad_target;
      const T gnorm = sqrt(phix * phix + phiy * phiy + T(geps * geps));
      const T gdev = gnorm / T(rp.grad_target) - T(1.0);
      const T weight = T(qx.w * qy.w * jac);
      acc_phi += weight * T(rp.alpha1 * (1.0 - w)) * dev * dev;
      acc_grad += weight * (T(rp.alpha2 * w) * gdev * gdev +
                            T(rp.alpha3 * (1.0 - w)) * (phix * phix + phiy * phiy));
    }
  if (p_phi) *p_phi = acc_phi;
  if (p_grad) *p_grad = acc_grad;
  return acc_phi + acc_grad;
}

/// Interface perimeter of one cut element.
template <class T>
T perimeter_element(const ElementCut<T>& ec) {
  T acc(0.0);
  for (const auto& s : ec.segs) {
    const T dx = s.q.x - s.p.x, dy = s.q.y - s.p.y;
    acc += sqrt(dx * dx + dy * dy);
  }
  return acc;
}

}  // namespace lstop
