#include "lstop/functionals.hpp"

#include <cmath>

#include "lstop/dual.hpp"

namespace lstop {

namespace {

constexpr int kOppositeEdge[4] = {1, 0, 3, 2};

/// Local design data with one seed direction per local tensor coefficient.
DesignLocal<Dual> design_local_dual(const ThbBasis& design, const Eigen::VectorXd& s,
                                    const ElemKey& e, const SchemeParams& scheme) {
  const auto& loc = design.local(e);
  DesignLocal<Dual> m;
  m.p = design.degree();
  m.bbox = design.mesh().cell_bbox(e);
  m.scheme = scheme;
  const int nloc = (m.p + 1) * (m.p + 1);
  for (int k = 0; k < nloc; ++k) {
    double acc = 0;
    for (int i = 0; i < int(loc.fns.size()); ++i) acc += loc.X(i, k) * s[loc.fns[i]];
    m.t[k] = Dual(acc, nloc, k);
  }
  return m;
}

DesignLocal<double> design_local_plain(const ThbBasis& design, const Eigen::VectorXd& s,
                                       const ElemKey& e, const SchemeParams& scheme) {
  const auto& loc = design.local(e);
  DesignLocal<double> m;
  m.p = design.degree();
  m.bbox = design.mesh().cell_bbox(e);
  m.scheme = scheme;
  const int nloc = (m.p + 1) * (m.p + 1);
  for (int k = 0; k < nloc; ++k) {
    double acc = 0;
    for (int i = 0; i < int(loc.fns.size()); ++i) acc += loc.X(i, k) * s[loc.fns[i]];
    m.t[k] = acc;
  }
  return m;
}

/// Snapped corner level set values of one element, with design derivatives
/// (corner order matches decompose_quad: (x0,y0),(x1,y0),(x1,y1),(x0,y1)).
template <class T>
std::array<T, 4> corner_phi_of(const DesignLocal<T>& mat) {
  const double lc[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  std::array<T, 4> out;
  for (int c = 0; c < 4; ++c) {
    const T sc = mat.s_at(T(lc[c][0]), T(lc[c][1]));
    out[c] = snap_scalar(phi_of_s(mat.scheme, sc), mat.scheme.snap_eps());
  }
  return out;
}

/// Bilinear DOF values of an element for one enrichment unit: w8 = X2' u.
std::array<double, 8> gather8(const ThbBasis::ElementLocal& loc, const EnrichmentMap& enr,
                              int unit, const Eigen::VectorXd& u) {
  std::array<double, 8> w{};
  for (int i = 0; i < int(loc.fns.size()); ++i) {
    const int slot = enr.slot(loc.fns[i], unit);
    for (int k = 0; k < 4; ++k) {
      w[2 * k] += loc.X(i, k) * u[2 * slot];
      w[2 * k + 1] += loc.X(i, k) * u[2 * slot + 1];
    }
  }
  return w;
}

std::array<double, 4> corner_lon(const HierarchicalMesh& mesh, const LonField& lon,
                                 const ElemKey& e) {
  const auto nodes = mesh.corner_nodes(e);
  // tensor corner order (0,0),(1,0),(1,1),(0,1) as penalty_element expects
  return {lon.at(nodes[0]), lon.at(nodes[1]), lon.at(nodes[2]), lon.at(nodes[3])};
}

/// Accumulate a Dual's derivative into the global gradient through the
/// element's extraction matrix.
void scatter_grad(const ThbBasis::ElementLocal& loc, const Dual& c, double scale,
                  Eigen::VectorXd& out) {
  if (c.constant()) return;
  const auto& g = c.grad();
  for (int i = 0; i < int(loc.fns.size()); ++i) {
    double acc = 0;
    for (int k = 0; k < g.size(); ++k) acc += loc.X(i, k) * g(k);
    out[loc.fns[i]] += scale * acc;
  }
}

}  // namespace

ObjectiveBreakdown eval_functionals(const FunctionalInputs& in, const LinearSystem& sys,
                                    const Eigen::VectorXd& u) {
  ObjectiveBreakdown bd;
  const double rep = in.weights.report_factor;
  bd.S = rep * u.dot(sys.K_bulk * u);
  double ma = 0, pp = 0, pphi = 0, pgrad = 0;
  const int nq = in.design->degree() + 1;
  for (const ElemKey& e : in.mesh->active_elements()) {
    const Rect b = in.mesh->cell_bbox(e);
    const DesignLocal<double> mat = design_local_plain(*in.design, *in.s, e, in.scheme);
    double p1, p2;
    penalty_element(b, mat, in.reg, corner_lon(*in.mesh, *in.lon, e), nq, &p1, &p2);
    pphi += p1;
    pgrad += p2;
    const PhaseClass ph = in.dec->phase_of(e);
    if (ph == PhaseClass::Solid) {
      ma += mass_quad(b, mat, nq);
    } else if (ph == PhaseClass::Cut) {
      const auto& ec = in.dec->cut.at(e);
      for (const auto& t : ec.tris)
        if (t.solid) ma += mass_tri(b, t.v, mat);
      pp += perimeter_element(ec);
    }
  }
  bd.MA = rep * ma;
  bd.Pp = rep * pp;
  bd.Pphi = rep * pphi;
  bd.Pgrad = rep * pgrad;
  bd.dofs_xfem = in.enr->ndof();
  bd.combine(in.weights);
  return bd;
}

Eigen::VectorXd adjoint_solve(const LinearSystem& sys, const Eigen::VectorXd& dF_du) {
  return Factorized(sys).solve(dF_du);
}

GradientVector total_gradient(const FunctionalInputs& in, const LinearSystem& sys,
                              const Eigen::VectorXd& u) {
  GradientVector gv;
  const int n = int(in.s->size());
  gv.dS = Eigen::VectorXd::Zero(n);
  gv.dMA = Eigen::VectorXd::Zero(n);
  gv.dPp = Eigen::VectorXd::Zero(n);
  gv.dPphi = Eigen::VectorXd::Zero(n);
  gv.dPgrad = Eigen::VectorXd::Zero(n);

  const double rep = in.weights.report_factor;
  const double eps = in.scheme.snap_eps();
  const ElasticParams& ep = in.elastic;
  const int nq = in.design->degree() + 1;
  const bool combined = in.scheme.scheme == DesignScheme::Combined;

  // adjoint of the strain energy: K lambda_hat = K_bulk u (dS/du = 2 rep K_bulk u)
  const Factorized fact(sys);
  const Eigen::VectorXd lam_hat = fact.solve(sys.K_bulk * u);

  double S_int = 0, ma = 0, pp = 0, pphi = 0, pgrad = 0;

  for (const ElemKey& e : in.mesh->active_elements()) {
    const Rect b = in.mesh->cell_bbox(e);
    const auto& dloc = in.design->local(e);
    const DesignLocal<Dual> mat = design_local_dual(*in.design, *in.s, e, in.scheme);

    // regularization penalties live on every element
    Dual p1, p2;
    penalty_element(b, mat, in.reg, corner_lon(*in.mesh, *in.lon, e), nq, &p1, &p2);
    pphi += p1.value();
    pgrad += p2.value();
    scatter_grad(dloc, p1, rep, gv.dPphi);
    scatter_grad(dloc, p2, rep, gv.dPgrad);

    const PhaseClass ph = in.dec->phase_of(e);
    if (ph == PhaseClass::Void) continue;

    const auto& sloc = in.state->local(e);
    const auto& eu = in.enr->units.at(e);
    const double k_spring = in.scheme.E0 / (in.mesh->edge(e.level) * in.mesh->edge(e.level));

    if (ph == PhaseClass::Solid) {
      // uncut solid: no geometric motion; only material sensitivity
      if (combined) {
        const auto u8 = gather8(sloc, *in.enr, eu.uncut_unit, u);
        const auto l8 = gather8(sloc, *in.enr, eu.uncut_unit, lam_hat);
        LocalSystem<Dual> K;
        bulk_quad(K, b, mat, ep, nq);
        const Dual W = K.virtual_work(l8.data(), u8.data());
        scatter_grad(dloc, W, -2.0 * rep, gv.dS);
        const Dual E2 = Dual(2.0) * strain_energy_quad(b, mat, ep, u8.data(), nq);
        S_int += E2.value();
        scatter_grad(dloc, E2, rep, gv.dS);
        const Dual M = mass_quad(b, mat, nq);
        ma += M.value();
        scatter_grad(dloc, M, rep, gv.dMA);
      } else {
        const auto u8 = gather8(sloc, *in.enr, eu.uncut_unit, u);
        S_int += 2.0 * strain_energy_quad(b, design_local_plain(*in.design, *in.s, e, in.scheme),
                                          ep, u8.data(), nq);
        ma += mass_quad(b, design_local_plain(*in.design, *in.s, e, in.scheme), nq);
      }
      continue;
    }

    // cut element: full geometric sensitivity through the decomposition
    const std::array<Dual, 4> cphi = corner_phi_of(mat);
    const ElementCut<Dual> ec = decompose_quad(b, cphi, eps);
    const auto& ecd = in.dec->cut.at(e);
    if (ec.tris.size() != ecd.tris.size())
      throw InvariantError("total_gradient: decomposition topology mismatch");

    for (std::size_t t = 0; t < ec.tris.size(); ++t) {
      if (!ecd.tris[t].solid) continue;
      const int unit = eu.tri_unit[t];
      const auto u8 = gather8(sloc, *in.enr, unit, u);
      const auto l8 = gather8(sloc, *in.enr, unit, lam_hat);
      LocalSystem<Dual> K;
      bulk_tri(K, b, ec.tris[t].v, mat, ep);
      Dual W = K.virtual_work(l8.data(), u8.data());
      const double gk = in.enr->gamma_spring(unit) * ep.spring_scale * k_spring;
      if (gk > 0) {
        LocalSystem<Dual> S;
        spring_tri(S, b, ec.tris[t].v, gk);
        W += S.virtual_work(l8.data(), u8.data());
      }
      scatter_grad(dloc, W, -2.0 * rep, gv.dS);
      const Dual E2 = Dual(2.0) * strain_energy_tri(b, ec.tris[t].v, mat, ep, u8.data());
      S_int += E2.value();
      scatter_grad(dloc, E2, rep, gv.dS);
      const Dual M = mass_tri(b, ec.tris[t].v, mat);
      ma += M.value();
      scatter_grad(dloc, M, rep, gv.dMA);
    }
    const Dual P = perimeter_element(ec);
    pp += P.value();
    scatter_grad(dloc, P, rep, gv.dPp);
  }

  // boundary loads and Nitsche conditions: interval endpoints move with phi
  const double tol = 1e-9 * std::max(in.mesh->domain().width(), in.mesh->domain().height());
  static const V2T<double> kOutward[4] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (const BoundaryFace& bf : boundary_faces(*in.mesh, *in.dec)) {
    const auto& dloc = in.design->local(bf.elem);
    const Rect b = in.mesh->cell_bbox(bf.elem);
    const DesignLocal<Dual> mat = design_local_dual(*in.design, *in.s, bf.elem, in.scheme);
    const std::array<Dual, 4> cphi = corner_phi_of(mat);
    // corner order (x0,y0),(x1,y0),(x1,y1),(x0,y1); map per edge
    const int e0[4] = {0, 1, 0, 3}, e1[4] = {3, 2, 1, 2};
    const Dual phi0 = cphi[e0[bf.edge]], phi1 = cphi[e1[bf.edge]];
    const auto iv = edge_solid_interval(phi0, phi1);
    if (iv.empty()) continue;
    const auto& sloc = in.state->local(bf.elem);
    const bool vertical = bf.edge < 2;
    const double s0 = vertical ? bf.p0.y : bf.p0.x;
    const double s1 = vertical ? bf.p1.y : bf.p1.x;
    auto point_at = [&](const Dual& t) {
      return V2T<Dual>{Dual(bf.p0.x) + t * Dual(bf.p1.x - bf.p0.x),
                       Dual(bf.p0.y) + t * Dual(bf.p1.y - bf.p0.y)};
    };
    auto clip = [](const Dual& a, double lim, bool lower) {
      if (lower) return val(a) > lim ? a : Dual(lim);
      return val(a) < lim ? a : Dual(lim);
    };

    for (const NeumannSegment& ns : in.bcs->neumann) {
      double t0, t1;
      if (!bc_segment_overlap(b, bf.edge, ns.x0, ns.y0, ns.x1, ns.y1, tol, &t0, &t1)) continue;
      const Dual a = clip(iv.a, t0, true), c = clip(iv.b, t1, false);
      if (val(c) - val(a) <= 1e-12) continue;
      const int unit = in.enr->unit_at_edge(*in.mesh, *in.dec, bf.elem, bf.edge,
                                            s0 + val(a) * (s1 - s0), s0 + val(c) * (s1 - s0));
      if (unit < 0) continue;
      LocalSystem<Dual> tr;
      traction_segment(tr, b, point_at(a), point_at(c), ns.tx, ns.ty);
      const auto u8 = gather8(sloc, *in.enr, unit, u);
      const auto l8 = gather8(sloc, *in.enr, unit, lam_hat);
      scatter_grad(dloc, tr.virtual_work(l8.data(), u8.data()), -2.0 * rep, gv.dS);
    }
    for (const DirichletSegment& ds : in.bcs->dirichlet) {
      double t0, t1;
      if (!bc_segment_overlap(b, bf.edge, ds.x0, ds.y0, ds.x1, ds.y1, tol, &t0, &t1)) continue;
      const Dual a = clip(iv.a, t0, true), c = clip(iv.b, t1, false);
      if (val(c) - val(a) <= 1e-12) continue;
      const int unit = in.enr->unit_at_edge(*in.mesh, *in.dec, bf.elem, bf.edge,
                                            s0 + val(a) * (s1 - s0), s0 + val(c) * (s1 - s0));
      if (unit < 0) continue;
      const int mask = (ds.fix_x ? 1 : 0) | (ds.fix_y ? 2 : 0);
      const double gammaN = ep.gammaN_mult * in.scheme.E0 / in.mesh->edge(bf.elem.level);
      LocalSystem<Dual> ni;
      nitsche_segment(ni, b, point_at(a), point_at(c),
                      V2T<Dual>{Dual(kOutward[bf.edge].x), Dual(kOutward[bf.edge].y)}, mat, ep,
                      gammaN, mask, in.bcs->exact_u);
      const auto u8 = gather8(sloc, *in.enr, unit, u);
      const auto l8 = gather8(sloc, *in.enr, unit, lam_hat);
      scatter_grad(dloc, ni.virtual_work(l8.data(), u8.data()), -2.0 * rep, gv.dS);
    }
  }

  // ghost faces carry material sensitivity in the combined scheme
  if (combined) {
    for (const InteriorFace& fc : interior_faces(*in.mesh, *in.dec)) {
      const bool any_cut = in.dec->phase_of(fc.self) == PhaseClass::Cut ||
                           in.dec->phase_of(fc.other) == PhaseClass::Cut;
      if (!any_cut) continue;
      const auto iv = edge_solid_interval(fc.phi0, fc.phi1);
      if (iv.empty()) continue;
      const bool vertical = fc.edge < 2;
      const double s0 = vertical ? fc.p0.y : fc.p0.x;
      const double s1 = vertical ? fc.p1.y : fc.p1.x;
      const double lo = s0 + iv.a * (s1 - s0), hi = s0 + iv.b * (s1 - s0);
      const int ua = in.enr->unit_at_edge(*in.mesh, *in.dec, fc.self, fc.edge, std::min(lo, hi),
                                          std::max(lo, hi));
      const int ub = in.enr->unit_at_edge(*in.mesh, *in.dec, fc.other, kOppositeEdge[fc.edge],
                                          std::min(lo, hi), std::max(lo, hi));
      if (ua < 0 || ub < 0) continue;
      const Rect ba = in.mesh->cell_bbox(fc.self), bb = in.mesh->cell_bbox(fc.other);
      const auto& la = in.state->local(fc.self);
      const auto& lb = in.state->local(fc.other);
      const auto& dloc = in.design->local(fc.self);
      const DesignLocal<Dual> mat = design_local_dual(*in.design, *in.s, fc.self, in.scheme);
      const double h = std::min(in.mesh->edge(fc.self.level), in.mesh->edge(fc.other.level));
      LocalSystem<Dual> gh;
      ghost_face(gh, ba, bb, fc.p0, fc.p1, kOutward[fc.edge], mat, ep, h * ep.gammaG);
      const auto ua8 = gather8(la, *in.enr, ua, u);
      const auto ub8 = gather8(lb, *in.enr, ub, u);
      const auto la8 = gather8(la, *in.enr, ua, lam_hat);
      const auto lb8 = gather8(lb, *in.enr, ub, lam_hat);
      double u16[16], l16[16];
      for (int k = 0; k < 8; ++k) {
        u16[k] = ua8[k];
        u16[8 + k] = ub8[k];
        l16[k] = la8[k];
        l16[8 + k] = lb8[k];
      }
      scatter_grad(dloc, gh.virtual_work(l16, u16), -2.0 * rep, gv.dS);
    }
  }

  gv.bd.S = rep * S_int;
  gv.bd.MA = rep * ma;
  gv.bd.Pp = rep * pp;
  gv.bd.Pphi = rep * pphi;
  gv.bd.Pgrad = rep * pgrad;
  gv.bd.dofs_xfem = in.enr->ndof();
  gv.bd.combine(in.weights);

  const FunctionalWeights& w = in.weights;
  gv.d_objective = w.w_s / w.S0 * gv.dS + w.w_m / w.M0 * gv.dMA + w.c_p / w.P0 * gv.dPp +
                   w.c_phi / w.P0 * (gv.dPphi + gv.dPgrad);
  gv.d_gmass = gv.dMA / gv.bd.M_total;
  return gv;
}

}  // namespace lstop
