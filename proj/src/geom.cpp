#include "lstop/geom.hpp"

#include <cmath>

namespace lstop {

Eigen::VectorXd material_phi_coeffs(const SchemeParams& sp, const Eigen::VectorXd& s) {
  if (sp.scheme == DesignScheme::Plain) return s;
  return sp.phi_scale * (Eigen::VectorXd::Constant(s.size(), sp.phi_thres) - s);
}

void snap_nodal(NodalField& phi, double eps) {
  for (auto& [n, v] : phi.values) v = snap_value(v, eps);
}

CutDecomposition decompose_cut_elements(const HierarchicalMesh& mesh, const NodalField& snapped,
                                         double snap_eps) {
  CutDecomposition out;
  for (const ElemKey& k : mesh.active_elements()) {
    const auto c = snapped.corners(mesh, k);
    out.corner_phi[k] = c;
    const PhaseClass ph = classify_corners(c);
    out.phase[k] = ph;
    if (ph == PhaseClass::Cut) out.cut.emplace(k, decompose_quad(mesh.cell_bbox(k), c, snap_eps));
  }
  return out;
}

double CutDecomposition::solid_area() const {
  double a = 0;
  for (const auto& [k, ec] : cut) {
    (void)k;
    for (const auto& t : ec.tris)
      if (t.solid) a += tri_area(t.v[0], t.v[1], t.v[2]);
  }
  return a;
}

double CutDecomposition::interface_perimeter() const {
  double len = 0;
  for (const auto& [k, ec] : cut) {
    (void)k;
    for (const auto& s : ec.segs) len += std::hypot(s.q.x - s.p.x, s.q.y - s.p.y);
  }
  return len;
}

LonField compute_lon(const HierarchicalMesh& mesh, const CutDecomposition& dec, int n_lon) {
  if (n_lon < 1) throw ConfigError("compute_lon: N_LoN must be >= 1");
  LonField lon;
  lon.I_max = n_lon;
  const auto active = mesh.active_elements();
  for (const ElemKey& k : active)
    if (dec.phase_of(k) == PhaseClass::Cut)
      for (const NodeKey& n : mesh.corner_nodes(k)) lon.I[n] = 1.0;
  for (int loop = 1; loop < n_lon; ++loop) {
    std::vector<ElemKey> flagged;
    for (const ElemKey& k : active) {
      bool hit = false;
      for (const NodeKey& n : mesh.corner_nodes(k)) hit = hit || lon.I.count(n) > 0;
      if (hit) flagged.push_back(k);
    }
    std::unordered_map<NodeKey, bool, NodeKeyHash> touched;
    for (const ElemKey& k : flagged)
      for (const NodeKey& n : mesh.corner_nodes(k)) touched[n] = true;
    for (const auto& [n, t] : touched) {
      (void)t;
      lon.I[n] += 1.0;
    }
  }
  return lon;
}

Eigen::VectorXd seed_initial_holes(const ThbBasis& basis, const HolePattern& pattern,
                                   double phi_target) {
  const HierarchicalMesh& mesh = basis.mesh();
  const Rect d = mesh.domain();
  std::vector<std::pair<double, double>> centers;
  for (int r = 0; r < pattern.rows; ++r)
    for (int c = 0; c < pattern.cols; ++c)
      centers.emplace_back(d.x0 + (c + 0.5) * d.width() / pattern.cols,
                           d.y0 + (r + 0.5) * d.height() / pattern.rows);

  for (const auto& [cx, cy] : centers) {
    const double r = pattern.radius;
    const Rect w{cx - r, cy - r, cx + r, cy + r};
    double max_edge = 0;
    for (const ElemKey& k : mesh.query_active(w)) max_edge = std::max(max_edge, mesh.edge(k.level));
    if (2.0 * pattern.radius < 2.0 * max_edge)
      throw ConfigError("seed_initial_holes: hole pattern unresolvable on current mesh");
  }

  auto profile = [&](double x, double y) {
    double v = -phi_target;  // solid background
    for (const auto& [cx, cy] : centers)
      v = std::max(v, pattern.radius - std::hypot(x - cx, y - cy));
    return std::clamp(v, -phi_target, phi_target);
  };
  return basis.project(profile);
}

}  // namespace lstop
