#include "lstop/analysis.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <bit>
#include <tuple>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace lstop {

namespace {

constexpr int kOppositeEdge[4] = {1, 0, 3, 2};

struct EdgeGeom {
  V2T<double> p0, p1;
  double phi0, phi1;
};

EdgeGeom edge_geom(const Rect& b, const std::array<double, 4>& c, int edge) {
  switch (edge) {
    case 0: return {{b.x0, b.y0}, {b.x0, b.y1}, c[0], c[3]};
    case 1: return {{b.x1, b.y0}, {b.x1, b.y1}, c[1], c[2]};
    case 2: return {{b.x0, b.y0}, {b.x1, b.y0}, c[0], c[1]};
    default: return {{b.x0, b.y1}, {b.x1, b.y1}, c[3], c[2]};
  }
}

// axis coordinate of the edge's line and its span along the edge
void edge_line_span(const Rect& b, int edge, double* line, double* s0, double* s1, bool* vertical) {
  switch (edge) {
    case 0: *line = b.x0; *s0 = b.y0; *s1 = b.y1; *vertical = true; return;
    case 1: *line = b.x1; *s0 = b.y0; *s1 = b.y1; *vertical = true; return;
    case 2: *line = b.y0; *s0 = b.x0; *s1 = b.x1; *vertical = false; return;
    default: *line = b.y1; *s0 = b.x0; *s1 = b.x1; *vertical = false; return;
  }
}

struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

struct VKey {
  std::uint64_t x, y;
  friend bool operator==(const VKey&, const VKey&) = default;
};
struct VKeyHash {
  std::size_t operator()(const VKey& k) const {
    std::uint64_t h = k.x * 0x9e3779b97f4a7c15ULL ^ k.y;
    h ^= h >> 31;
    h *= 0xbf58476d1ce4e5b9ULL;
    return std::size_t(h ^ (h >> 29));
  }
};
VKey vkey(const V2T<double>& v) {
  const double x = v.x == 0.0 ? 0.0 : v.x;  // fold -0.0
  const double y = v.y == 0.0 ? 0.0 : v.y;
  return {std::bit_cast<std::uint64_t>(x), std::bit_cast<std::uint64_t>(y)};
}
struct EKey {
  VKey a, b;
  friend bool operator==(const EKey&, const EKey&) = default;
};
struct EKeyHash {
  std::size_t operator()(const EKey& k) const {
    return VKeyHash{}(k.a) * 1315423911u ^ VKeyHash{}(k.b);
  }
};
EKey ekey(const V2T<double>& p, const V2T<double>& q) {
  VKey a = vkey(p), b = vkey(q);
  if (std::tie(b.x, b.y) < std::tie(a.x, a.y)) std::swap(a, b);
  return {a, b};
}

}  // namespace

std::vector<InteriorFace> interior_faces(const HierarchicalMesh& mesh,
                                         const CutDecomposition& dec) {
  std::vector<InteriorFace> out;
  for (const ElemKey& e : mesh.active_elements()) {
    const Rect b = mesh.cell_bbox(e);
    const auto& c = dec.corner_phi.at(e);
    const std::array<ElemKey, 4> nb = {{{e.level, e.i - 1, e.j},
                                        {e.level, e.i + 1, e.j},
                                        {e.level, e.i, e.j - 1},
                                        {e.level, e.i, e.j + 1}}};
    for (int edge = 0; edge < 4; ++edge) {
      if (!mesh.in_grid(nb[edge])) continue;
      const auto cov = mesh.cover(nb[edge]);
      ElemKey other;
      if (cov == HierarchicalMesh::Cover::Active) {
        if (edge == 0 || edge == 2) continue;  // dedupe same-level: emit E and N only
        other = nb[edge];
      } else if (cov == HierarchicalMesh::Cover::ByCoarser) {
        other = *mesh.active_covering(nb[edge]);
      } else {
        continue;  // finer side owns the face
      }
      const EdgeGeom g = edge_geom(b, c, edge);
      out.push_back({e, other, edge, g.p0, g.p1, g.phi0, g.phi1});
    }
  }
  return out;
}

std::vector<BoundaryFace> boundary_faces(const HierarchicalMesh& mesh,
                                         const CutDecomposition& dec) {
  std::vector<BoundaryFace> out;
  for (const ElemKey& e : mesh.active_elements()) {
    const Rect b = mesh.cell_bbox(e);
    const auto& c = dec.corner_phi.at(e);
    const std::array<ElemKey, 4> nb = {{{e.level, e.i - 1, e.j},
                                        {e.level, e.i + 1, e.j},
                                        {e.level, e.i, e.j - 1},
                                        {e.level, e.i, e.j + 1}}};
    for (int edge = 0; edge < 4; ++edge) {
      if (mesh.in_grid(nb[edge])) continue;
      const EdgeGeom g = edge_geom(b, c, edge);
      out.push_back({e, edge, g.p0, g.p1, g.phi0, g.phi1});
    }
  }
  return out;
}

int EnrichmentMap::levels_of(int fn) const {
  int m = 0;
  for (const auto& [u, lev] : fn_unit_m[fn]) m = std::max(m, lev + 1);
  return m;
}

int EnrichmentMap::unit_at_edge(const HierarchicalMesh& mesh, const CutDecomposition& dec,
                                const ElemKey& e, int edge, double lo, double hi) const {
  const auto it = units.find(e);
  if (it == units.end()) return -1;
  if (it->second.uncut_unit >= 0) return it->second.uncut_unit;
  if (it->second.tri_unit.empty()) return -1;  // void
  const Rect b = mesh.cell_bbox(e);
  double line, s0, s1;
  bool vertical;
  edge_line_span(b, edge, &line, &s0, &s1, &vertical);
  const double tol = 1e-12 * mesh.edge(e.level);
  const auto& ec = dec.cut.at(e);
  for (std::size_t t = 0; t < ec.tris.size(); ++t) {
    if (!ec.tris[t].solid) continue;
    double a = 0, bcoord = 0;
    int on_line = 0;
    for (int k = 0; k < 3; ++k) {
      const double lc = vertical ? ec.tris[t].v[k].x : ec.tris[t].v[k].y;
      const double sc = vertical ? ec.tris[t].v[k].y : ec.tris[t].v[k].x;
      if (std::abs(lc - line) <= tol) {
        (on_line == 0 ? a : bcoord) = sc;
        ++on_line;
      }
    }
    if (on_line < 2) continue;
    const double elo = std::min(a, bcoord), ehi = std::max(a, bcoord);
    if (std::min(ehi, hi) - std::max(elo, lo) > tol) return it->second.tri_unit[t];
  }
  return -1;
}

std::vector<char> detect_islands(const EnrichmentMap& enr) {
  std::vector<char> out(enr.n_comps);
  for (int c = 0; c < enr.n_comps; ++c) out[c] = enr.comp_supported(c) ? 0 : 1;
  return out;
}

bool bc_segment_overlap(const Rect& b, int edge, double sx0, double sy0, double sx1, double sy1,
                        double tol, double* t0, double* t1) {
  double line, s0, s1;
  bool vertical;
  edge_line_span(b, edge, &line, &s0, &s1, &vertical);
  const double bl0 = vertical ? sx0 : sy0, bl1 = vertical ? sx1 : sy1;
  if (std::abs(bl0 - bl1) > tol) return false;  // not aligned with this edge
  if (std::abs(bl0 - line) > tol) return false;
  const double a0 = vertical ? std::min(sy0, sy1) : std::min(sx0, sx1);
  const double a1 = vertical ? std::max(sy0, sy1) : std::max(sx0, sx1);
  const double lo = std::max(a0, s0), hi = std::min(a1, s1);
  if (hi - lo <= tol) return false;
  *t0 = (lo - s0) / (s1 - s0);
  *t1 = (hi - s0) / (s1 - s0);
  return true;
}

EnrichmentMap build_enrichment(const HierarchicalMesh& mesh, const CutDecomposition& dec,
                               const ThbBasis& state, const BCs& bcs) {
  EnrichmentMap enr;
  const auto active = mesh.active_elements();

  // units per element
  for (const ElemKey& e : active) {
    EnrichmentMap::ElemUnits eu;
    const PhaseClass ph = dec.phase_of(e);
    if (ph == PhaseClass::Solid) {
      eu.uncut_unit = enr.n_units++;
      enr.unit_elem.push_back(e);
    } else if (ph == PhaseClass::Cut) {
      const auto& ec = dec.cut.at(e);
      eu.tri_unit.assign(ec.tris.size(), -1);
      // group solid triangles sharing sub-edges (canonical vertices)
      std::unordered_map<EKey, int, EKeyHash> edge_owner;
      Dsu local(int(ec.tris.size()));
      for (std::size_t t = 0; t < ec.tris.size(); ++t) {
        if (!ec.tris[t].solid) continue;
        for (int k = 0; k < 3; ++k) {
          const EKey key = ekey(ec.tris[t].v[k], ec.tris[t].v[(k + 1) % 3]);
          auto [it, inserted] = edge_owner.try_emplace(key, int(t));
          if (!inserted && ec.tris[it->second].solid) local.unite(int(t), it->second);
        }
      }
      std::unordered_map<int, int> root2unit;
      for (std::size_t t = 0; t < ec.tris.size(); ++t) {
        if (!ec.tris[t].solid) continue;
        const int r = local.find(int(t));
        auto [it, inserted] = root2unit.try_emplace(r, enr.n_units);
        if (inserted) {
          ++enr.n_units;
          enr.unit_elem.push_back(e);
        }
        eu.tri_unit[t] = it->second;
      }
    }
    enr.units.emplace(e, std::move(eu));
  }

  // cross-element connectivity through shared solid face intervals
  Dsu global(enr.n_units);
  std::vector<std::pair<int, int>> links;
  const auto faces = interior_faces(mesh, dec);
  for (const InteriorFace& f : faces) {
    const auto iv = edge_solid_interval(f.phi0, f.phi1);
    if (iv.empty()) continue;
    const bool vertical = f.edge < 2;
    const double s0 = vertical ? f.p0.y : f.p0.x;
    const double s1 = vertical ? f.p1.y : f.p1.x;
    const double lo = s0 + iv.a * (s1 - s0), hi = s0 + iv.b * (s1 - s0);
    const int ua = enr.unit_at_edge(mesh, dec, f.self, f.edge, std::min(lo, hi), std::max(lo, hi));
    const int ub = enr.unit_at_edge(mesh, dec, f.other, kOppositeEdge[f.edge], std::min(lo, hi),
                                    std::max(lo, hi));
    if (ua < 0 || ub < 0) continue;
    global.unite(ua, ub);
    links.emplace_back(ua, ub);
  }

  // intra-element unit links for the per-function adjacency (units in one
  // element are distinct components locally, no link)

  // global components in deterministic order
  enr.unit_comp.assign(enr.n_units, -1);
  std::unordered_map<int, int> root2comp;
  for (int u = 0; u < enr.n_units; ++u) {
    const int r = global.find(u);
    auto [it, inserted] = root2comp.try_emplace(r, enr.n_comps);
    if (inserted) ++enr.n_comps;
    enr.unit_comp[u] = it->second;
  }

  // Dirichlet support marking
  enr.comp_fix_mask.assign(enr.n_comps, 0);
  const double tol = 1e-9 * std::max(mesh.domain().width(), mesh.domain().height());
  for (const BoundaryFace& bf : boundary_faces(mesh, dec)) {
    const auto iv = edge_solid_interval(bf.phi0, bf.phi1);
    if (iv.empty()) continue;
    const Rect b = mesh.cell_bbox(bf.elem);
    for (const DirichletSegment& ds : bcs.dirichlet) {
      double t0, t1;
      if (!bc_segment_overlap(b, bf.edge, ds.x0, ds.y0, ds.x1, ds.y1, tol, &t0, &t1)) continue;
      const double a = std::max(t0, iv.a), c = std::min(t1, iv.b);
      if (c - a <= 1e-12) continue;
      const bool vertical = bf.edge < 2;
      const double s0 = vertical ? bf.p0.y : bf.p0.x;
      const double s1 = vertical ? bf.p1.y : bf.p1.x;
      const int u = enr.unit_at_edge(mesh, dec, bf.elem, bf.edge, s0 + a * (s1 - s0),
                                     s0 + c * (s1 - s0));
      if (u >= 0)
        enr.comp_fix_mask[enr.unit_comp[u]] |= (ds.fix_x ? 1 : 0) | (ds.fix_y ? 2 : 0);
    }
  }

  // per-state-function enrichment levels: local components of the solid
  // units within the function's support
  std::vector<std::vector<int>> adj(enr.n_units);
  for (const auto& [a, b] : links) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<std::vector<int>> fn_units(state.size());
  for (const ElemKey& e : active) {
    const auto& loc = state.local(e);
    const auto& eu = enr.units.at(e);
    std::vector<int> us;
    if (eu.uncut_unit >= 0) us.push_back(eu.uncut_unit);
    for (int u : eu.tri_unit)
      if (u >= 0) us.push_back(u);
    std::sort(us.begin(), us.end());
    us.erase(std::unique(us.begin(), us.end()), us.end());
    for (int fn : loc.fns)
      fn_units[fn].insert(fn_units[fn].end(), us.begin(), us.end());
  }

  enr.fn_slot_base.assign(state.size(), 0);
  enr.fn_unit_m.assign(state.size(), {});
  enr.n_slots = 0;
  for (std::size_t fn = 0; fn < state.size(); ++fn) {
    auto& us = fn_units[fn];
    std::sort(us.begin(), us.end());
    us.erase(std::unique(us.begin(), us.end()), us.end());
    enr.fn_slot_base[fn] = enr.n_slots;
    if (us.empty()) continue;
    std::unordered_map<int, int>& u2m = enr.fn_unit_m[fn];
    int next_m = 0;
    for (int seed : us) {
      if (u2m.count(seed)) continue;
      // flood fill within the support
      std::vector<int> stack{seed};
      u2m[seed] = next_m;
      while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[u]) {
          if (u2m.count(v)) continue;
          if (!std::binary_search(us.begin(), us.end(), v)) continue;
          u2m[v] = next_m;
          stack.push_back(v);
        }
      }
      ++next_m;
    }
    enr.n_slots += next_m;
  }
  return enr;
}

Eigen::MatrixXd state_expansion(const ThbBasis::ElementLocal& loc) {
  const int n = int(loc.fns.size());
  Eigen::MatrixXd X2 = Eigen::MatrixXd::Zero(2 * n, 8);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 4; ++k) {
      X2(2 * i, 2 * k) = loc.X(i, k);
      X2(2 * i + 1, 2 * k + 1) = loc.X(i, k);
    }
  return X2;
}

namespace {

DesignLocal<double> design_local(const ThbBasis& design, const Eigen::VectorXd& s,
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

void scatter(const Eigen::MatrixXd& Kst, const std::vector<int>& dofs,
             std::vector<Eigen::Triplet<double>>& trips) {
  for (int i = 0; i < int(dofs.size()); ++i)
    for (int j = 0; j < int(dofs.size()); ++j)
      if (Kst(i, j) != 0.0) trips.emplace_back(dofs[i], dofs[j], Kst(i, j));
}

std::vector<int> dof_list(const EnrichmentMap& enr, const std::vector<int>& fns, int unit) {
  std::vector<int> dofs(2 * fns.size());
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const int slot = enr.slot(fns[i], unit);
    dofs[2 * i] = 2 * slot;
    dofs[2 * i + 1] = 2 * slot + 1;
  }
  return dofs;
}

Eigen::MatrixXd to_eigen(const LocalSystem<double>& ls) {
  Eigen::MatrixXd K(ls.n, ls.n);
  for (int i = 0; i < ls.n; ++i)
    for (int j = 0; j < ls.n; ++j) K(i, j) = ls.Kat(i, j);
  return K;
}

}  // namespace

LinearSystem assemble(const HierarchicalMesh& mesh, const ThbBasis& design,
                      const Eigen::VectorXd& s, const SchemeParams& scheme,
                      const ElasticParams& elastic, const BCs& bcs, const CutDecomposition& dec,
                      const EnrichmentMap& enr, const ThbBasis& state) {
  const int ndof = enr.ndof();
  if (ndof == 0) throw NumericalError("assemble: no solid material, empty system");
  if (elastic.spring_scale == 0.0)
    for (int c = 0; c < enr.n_comps; ++c)
      if (!enr.comp_supported(c))
        throw NumericalError("assemble: floating solid component without springs is singular");

  std::vector<Eigen::Triplet<double>> trips, trips_bulk;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(ndof);
  const int nq = design.degree() + 1;

  for (const ElemKey& e : mesh.active_elements()) {
    const PhaseClass ph = dec.phase_of(e);
    if (ph == PhaseClass::Void) continue;
    const Rect b = mesh.cell_bbox(e);
    const auto& sloc = state.local(e);
    const Eigen::MatrixXd X2 = state_expansion(sloc);
    const DesignLocal<double> mat = design_local(design, s, e, scheme);
    const auto& eu = enr.units.at(e);
    const double k_spring = scheme.E0 / (mesh.edge(e.level) * mesh.edge(e.level));

    if (ph == PhaseClass::Solid) {
      LocalSystem<double> bulk;
      bulk_quad(bulk, b, mat, elastic, nq);
      const Eigen::MatrixXd Kb = X2 * to_eigen(bulk) * X2.transpose();
      const auto dofs = dof_list(enr, sloc.fns, eu.uncut_unit);
      scatter(Kb, dofs, trips);
      scatter(Kb, dofs, trips_bulk);
      const double gk = enr.gamma_spring(eu.uncut_unit) * elastic.spring_scale * k_spring;
      if (gk > 0) {
        LocalSystem<double> spr;
        spring_quad<double>(spr, b, gk);
        scatter(X2 * to_eigen(spr) * X2.transpose(), dofs, trips);
      }
    } else {
      const auto& ec = dec.cut.at(e);
      for (std::size_t t = 0; t < ec.tris.size(); ++t) {
        if (!ec.tris[t].solid) continue;
        LocalSystem<double> bulk;
        bulk_tri(bulk, b, ec.tris[t].v, mat, elastic);
        const auto dofs = dof_list(enr, sloc.fns, eu.tri_unit[t]);
        const Eigen::MatrixXd Kb = X2 * to_eigen(bulk) * X2.transpose();
        scatter(Kb, dofs, trips);
        scatter(Kb, dofs, trips_bulk);
        const double gk = enr.gamma_spring(eu.tri_unit[t]) * elastic.spring_scale * k_spring;
        if (gk > 0) {
          LocalSystem<double> spr;
          spring_tri<double>(spr, b, ec.tris[t].v, gk);
          scatter(X2 * to_eigen(spr) * X2.transpose(), dofs, trips);
        }
      }
    }
  }

  // boundary loads and Nitsche boundary conditions
  const double tol = 1e-9 * std::max(mesh.domain().width(), mesh.domain().height());
  static const V2T<double> kOutward[4] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (const BoundaryFace& bf : boundary_faces(mesh, dec)) {
    const auto iv = edge_solid_interval(bf.phi0, bf.phi1);
    if (iv.empty()) continue;
    const Rect b = mesh.cell_bbox(bf.elem);
    const auto& sloc = state.local(bf.elem);
    const Eigen::MatrixXd X2 = state_expansion(sloc);
    const DesignLocal<double> mat = design_local(design, s, bf.elem, scheme);
    const bool vertical = bf.edge < 2;
    const double s0 = vertical ? bf.p0.y : bf.p0.x;
    const double s1 = vertical ? bf.p1.y : bf.p1.x;
    auto point_at = [&](double t) {
      return V2T<double>{bf.p0.x + t * (bf.p1.x - bf.p0.x), bf.p0.y + t * (bf.p1.y - bf.p0.y)};
    };

    for (const NeumannSegment& ns : bcs.neumann) {
      double t0, t1;
      if (!bc_segment_overlap(b, bf.edge, ns.x0, ns.y0, ns.x1, ns.y1, tol, &t0, &t1)) continue;
      const double a = std::max(t0, iv.a), c = std::min(t1, iv.b);
      if (c - a <= 1e-12) continue;
      const int unit =
          enr.unit_at_edge(mesh, dec, bf.elem, bf.edge, s0 + a * (s1 - s0), s0 + c * (s1 - s0));
      if (unit < 0) continue;
      LocalSystem<double> tr;
      traction_segment<double>(tr, b, point_at(a), point_at(c), ns.tx, ns.ty);
      const auto dofs = dof_list(enr, sloc.fns, unit);
      Eigen::VectorXd f8(8);
      for (int k = 0; k < 8; ++k) f8[k] = tr.f[k];
      const Eigen::VectorXd fst = X2 * f8;
      for (int i = 0; i < int(dofs.size()); ++i) f[dofs[i]] += fst[i];
    }

    for (const DirichletSegment& ds : bcs.dirichlet) {
      double t0, t1;
      if (!bc_segment_overlap(b, bf.edge, ds.x0, ds.y0, ds.x1, ds.y1, tol, &t0, &t1)) continue;
      const double a = std::max(t0, iv.a), c = std::min(t1, iv.b);
      if (c - a <= 1e-12) continue;
      const int unit =
          enr.unit_at_edge(mesh, dec, bf.elem, bf.edge, s0 + a * (s1 - s0), s0 + c * (s1 - s0));
      if (unit < 0) continue;
      const int mask = (ds.fix_x ? 1 : 0) | (ds.fix_y ? 2 : 0);
      const double gammaN = elastic.gammaN_mult * scheme.E0 / mesh.edge(bf.elem.level);
      LocalSystem<double> ni;
      nitsche_segment<double>(ni, b, point_at(a), point_at(c), kOutward[bf.edge], mat, elastic,
                              gammaN, mask, bcs.exact_u);
      const auto dofs = dof_list(enr, sloc.fns, unit);
      scatter(X2 * to_eigen(ni) * X2.transpose(), dofs, trips);
      Eigen::VectorXd f8(8);
      for (int k = 0; k < 8; ++k) f8[k] = ni.f[k];
      const Eigen::VectorXd fst = X2 * f8;
      for (int i = 0; i < int(dofs.size()); ++i) f[dofs[i]] += fst[i];
    }
  }

  // Nitsche on the immersed interface (verification problems)
  if (bcs.dirichlet_on_interface) {
    for (const auto& [e, ec] : dec.cut) {
      const Rect b = mesh.cell_bbox(e);
      const auto& sloc = state.local(e);
      const Eigen::MatrixXd X2 = state_expansion(sloc);
      const DesignLocal<double> mat = design_local(design, s, e, scheme);
      const auto& eu = enr.units.at(e);
      const double gammaN = elastic.gammaN_mult * scheme.E0 / mesh.edge(e.level);
      for (const auto& seg : ec.segs) {
        const int unit = eu.tri_unit[seg.solid_tri];
        if (unit < 0) continue;
        LocalSystem<double> ni;
        nitsche_segment<double>(ni, b, seg.p, seg.q, seg.n, mat, elastic, gammaN, 3, bcs.exact_u);
        const auto dofs = dof_list(enr, sloc.fns, unit);
        scatter(X2 * to_eigen(ni) * X2.transpose(), dofs, trips);
        Eigen::VectorXd f8(8);
        for (int k = 0; k < 8; ++k) f8[k] = ni.f[k];
        const Eigen::VectorXd fst = X2 * f8;
        for (int i = 0; i < int(dofs.size()); ++i) f[dofs[i]] += fst[i];
      }
    }
  }

  // ghost stabilization on faces of intersected elements
  for (const InteriorFace& fc : interior_faces(mesh, dec)) {
    const bool any_cut = dec.phase_of(fc.self) == PhaseClass::Cut ||
                         dec.phase_of(fc.other) == PhaseClass::Cut;
    if (!any_cut) continue;
    const auto iv = edge_solid_interval(fc.phi0, fc.phi1);
    if (iv.empty()) continue;
    const bool vertical = fc.edge < 2;
    const double s0 = vertical ? fc.p0.y : fc.p0.x;
    const double s1 = vertical ? fc.p1.y : fc.p1.x;
    const double lo = s0 + iv.a * (s1 - s0), hi = s0 + iv.b * (s1 - s0);
    const int ua = enr.unit_at_edge(mesh, dec, fc.self, fc.edge, std::min(lo, hi),
                                    std::max(lo, hi));
    const int ub = enr.unit_at_edge(mesh, dec, fc.other, kOppositeEdge[fc.edge],
                                    std::min(lo, hi), std::max(lo, hi));
    if (ua < 0 || ub < 0) continue;
    const Rect ba = mesh.cell_bbox(fc.self), bb = mesh.cell_bbox(fc.other);
    const auto& la = state.local(fc.self);
    const auto& lb = state.local(fc.other);
    const Eigen::MatrixXd X2a = state_expansion(la);
    const Eigen::MatrixXd X2b = state_expansion(lb);
    const DesignLocal<double> mat = design_local(design, s, fc.self, scheme);
    const double h = std::min(mesh.edge(fc.self.level), mesh.edge(fc.other.level));
    LocalSystem<double> gh;
    ghost_face<double>(gh, ba, bb, fc.p0, fc.p1, kOutward[fc.edge], mat, elastic,
                       h * elastic.gammaG);
    const int na = int(la.fns.size()), nb2 = int(lb.fns.size());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 * (na + nb2), 16);
    G.block(0, 0, 2 * na, 8) = X2a;
    G.block(2 * na, 8, 2 * nb2, 8) = X2b;
    const auto da = dof_list(enr, la.fns, ua);
    const auto db = dof_list(enr, lb.fns, ub);
    std::vector<int> dofs = da;
    dofs.insert(dofs.end(), db.begin(), db.end());
    scatter(G * to_eigen(gh) * G.transpose(), dofs, trips);
  }

  LinearSystem sys;
  sys.ndof = ndof;
  sys.K.resize(ndof, ndof);
  sys.K.setFromTriplets(trips.begin(), trips.end());
  sys.K_bulk.resize(ndof, ndof);
  sys.K_bulk.setFromTriplets(trips_bulk.begin(), trips_bulk.end());
  sys.f = f;
  return sys;
}

Factorized::Factorized(const LinearSystem& sys) : sys_(&sys) {
  // symmetric Jacobi equilibration keeps the Nitsche-penalty rows from
  // raising the refinement floor above the 1e-12 residual requirement
  dinv_.resize(sys.ndof);
  for (int i = 0; i < sys.ndof; ++i) {
    const double d = sys.K.coeff(i, i);
    dinv_[i] = d > 0 ? 1.0 / std::sqrt(d) : 1.0;
  }
  Ks_ = dinv_.asDiagonal() * sys.K * dinv_.asDiagonal();
  ldlt_.compute(Ks_);
  if (ldlt_.info() != Eigen::Success)
    throw NumericalError("solve: factorization failed (system may be singular)");
}

namespace {
// residual in extended precision: refinement to small true residuals needs
// r evaluated below the double rounding floor of |K||u|; also returns
// || |K||u| || for the backward-error normalization
Eigen::VectorXd residual_ext(const Eigen::SparseMatrix<double>& K, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& f, double* absKu_norm = nullptr) {
  std::vector<long double> acc(f.size()), mag(f.size());
  for (int i = 0; i < f.size(); ++i) acc[i] = f[i];
  for (int k = 0; k < K.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, k); it; ++it) {
      const long double t = (long double)it.value() * (long double)u[it.col()];
      acc[it.row()] -= t;
      mag[it.row()] += t < 0 ? -t : t;
    }
  Eigen::VectorXd r(f.size());
  long double m2 = 0;
  for (int i = 0; i < f.size(); ++i) {
    r[i] = double(acc[i]);
    m2 += mag[i] * mag[i];
  }
  if (absKu_norm) *absKu_norm = double(sqrtl(m2));
  return r;
}
}  // namespace

Eigen::VectorXd Factorized::solve(const Eigen::VectorXd& rhs) const {
  const double fn = rhs.norm();
  if (fn == 0.0) return Eigen::VectorXd::Zero(sys_->ndof);
  Eigen::VectorXd u = dinv_.cwiseProduct(ldlt_.solve(dinv_.cwiseProduct(rhs)));
  // refine with extended-precision residuals: design-derivative checks
  // difference energies across 1e-6 design steps, and the residual target
  // of 1e-12 sits below the double rounding floor of |K||u| for strong
  // Nitsche penalties
  double prev = std::numeric_limits<double>::max();
  double backward = std::numeric_limits<double>::max();
  for (int it = 0; it < 12; ++it) {
    double absKu = 0;
    const Eigen::VectorXd r = residual_ext(sys_->K, u, rhs, &absKu);
    const double rn = r.norm();
    backward = rn / (absKu + fn);
    if (rn <= 1e-15 * fn || rn >= 0.9 * prev) break;
    prev = rn;
    u += dinv_.cwiseProduct(ldlt_.solve(dinv_.cwiseProduct(r)));
  }
  // normwise backward error; the plain ||r||/||f|| measure is floored at
  // eps * ||K|| ||u|| / ||f|| in double precision and becomes unattainable
  // under strong boundary penalties
  if (backward > 1e-12) {
    std::ostringstream msg;
    msg << "solve: backward error " << backward << " exceeds 1e-12 (ill-conditioned system)";
    throw NumericalError(msg.str());
  }
  return u;
}

Eigen::VectorXd solve(const LinearSystem& sys) { return Factorized(sys).solve(sys.f); }

Eigen::Vector2d eval_displacement(const HierarchicalMesh& mesh, const CutDecomposition& dec,
                                  const EnrichmentMap& enr, const ThbBasis& state,
                                  const Eigen::VectorXd& u, double x, double y) {
  const ElemKey e = state.locate(x, y);
  const PhaseClass ph = dec.phase_of(e);
  if (ph == PhaseClass::Void) return Eigen::Vector2d::Zero();
  const auto& eu = enr.units.at(e);
  int unit = eu.uncut_unit;
  if (ph == PhaseClass::Cut) {
    const auto& ec = dec.cut.at(e);
    unit = -1;
    const double tol = -1e-10 * mesh.edge(e.level) * mesh.edge(e.level);
    for (std::size_t t = 0; t < ec.tris.size(); ++t) {
      const auto& tr = ec.tris[t];
      const V2T<double> p{x, y};
      const double a0 = tri_area(tr.v[0], tr.v[1], p);
      const double a1 = tri_area(tr.v[1], tr.v[2], p);
      const double a2 = tri_area(tr.v[2], tr.v[0], p);
      if (a0 >= tol && a1 >= tol && a2 >= tol) {
        if (!tr.solid) return Eigen::Vector2d::Zero();
        unit = eu.tri_unit[t];
        break;
      }
    }
    if (unit < 0) return Eigen::Vector2d::Zero();
  }
  const Rect b = mesh.cell_bbox(e);
  const auto& sloc = state.local(e);
  const Shape4<double> sh =
      shape_quad(b, (x - b.x0) / b.width(), (y - b.y0) / b.height());
  Eigen::Vector2d out = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < sloc.fns.size(); ++i) {
    double N = 0;
    for (int k = 0; k < 4; ++k) N += sloc.X(int(i), k) * sh.N[k];
    const int slot = enr.slot(sloc.fns[i], unit);
    out[0] += N * u[2 * slot];
    out[1] += N * u[2 * slot + 1];
  }
  return out;
}

void dump_matrix(const Eigen::SparseMatrix<double>& K, std::ostream& os) {
  os << K.rows() << " " << K.cols() << " " << K.nonZeros() << "\n";
  for (int k = 0; k < K.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, k); it; ++it)
      os << it.row() << " " << it.col() << " " << it.value() << "\n";
}

}  // namespace lstop
