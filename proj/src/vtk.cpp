#include "lstop/vtk.hpp"

#include <fstream>

namespace lstop {

namespace {
std::ofstream open_vtk(const std::string& path, const char* title) {
  std::ofstream os(path);
  if (!os) throw Error("vtk: cannot open " + path);
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  return os;
}
}  // namespace

void write_mesh_vtk(const std::string& path, const HierarchicalMesh& mesh,
                    const CutDecomposition& dec) {
  const auto active = mesh.active_elements();
  std::ofstream os = open_vtk(path, "hierarchical mesh");
  os << "POINTS " << 4 * active.size() << " double\n";
  for (const ElemKey& k : active) {
    const Rect b = mesh.cell_bbox(k);
    os << b.x0 << " " << b.y0 << " 0\n" << b.x1 << " " << b.y0 << " 0\n"
       << b.x1 << " " << b.y1 << " 0\n" << b.x0 << " " << b.y1 << " 0\n";
  }
  os << "CELLS " << active.size() << " " << 5 * active.size() << "\n";
  for (std::size_t i = 0; i < active.size(); ++i)
    os << "4 " << 4 * i << " " << 4 * i + 1 << " " << 4 * i + 2 << " " << 4 * i + 3 << "\n";
  os << "CELL_TYPES " << active.size() << "\n";
  for (std::size_t i = 0; i < active.size(); ++i) os << "9\n";
  os << "CELL_DATA " << active.size() << "\nSCALARS level int 1\nLOOKUP_TABLE default\n";
  for (const ElemKey& k : active) os << k.level << "\n";
  os << "SCALARS phase int 1\nLOOKUP_TABLE default\n";
  for (const ElemKey& k : active) {
    const PhaseClass ph = dec.phase_of(k);
    os << (ph == PhaseClass::Solid ? -1 : ph == PhaseClass::Cut ? 0 : 1) << "\n";
  }
}

void write_design_vtk(const std::string& path, const HierarchicalMesh& mesh,
                      const CutDecomposition& dec, const EnrichmentMap* enr,
                      const ThbBasis* state, const Eigen::VectorXd* u,
                      const StressField* stress) {
  struct Tri {
    V2T<double> v[3];
    int phase;
    ElemKey elem;
  };
  std::vector<Tri> tris;
  for (const ElemKey& k : mesh.active_elements()) {
    const PhaseClass ph = dec.phase_of(k);
    const Rect b = mesh.cell_bbox(k);
    if (ph == PhaseClass::Cut) {
      for (const auto& t : dec.cut.at(k).tris)
        tris.push_back({{t.v[0], t.v[1], t.v[2]}, t.solid ? -1 : 1, k});
    } else {
      const int p = ph == PhaseClass::Solid ? -1 : 1;
      tris.push_back({{{b.x0, b.y0}, {b.x1, b.y0}, {b.x1, b.y1}}, p, k});
      tris.push_back({{{b.x0, b.y0}, {b.x1, b.y1}, {b.x0, b.y1}}, p, k});
    }
  }
  std::ofstream os = open_vtk(path, "cut decomposition");
  os << "POINTS " << 3 * tris.size() << " double\n";
  for (const Tri& t : tris)
    for (int k = 0; k < 3; ++k) os << t.v[k].x << " " << t.v[k].y << " 0\n";
  os << "CELLS " << tris.size() << " " << 4 * tris.size() << "\n";
  for (std::size_t i = 0; i < tris.size(); ++i)
    os << "3 " << 3 * i << " " << 3 * i + 1 << " " << 3 * i + 2 << "\n";
  os << "CELL_TYPES " << tris.size() << "\n";
  for (std::size_t i = 0; i < tris.size(); ++i) os << "5\n";
  os << "CELL_DATA " << tris.size() << "\nSCALARS phase int 1\nLOOKUP_TABLE default\n";
  for (const Tri& t : tris) os << t.phase << "\n";
  if (enr && state && u && stress) {
    // centroid stress per solid triangle (zero in void)
    std::vector<std::array<double, 4>> sig(tris.size(), {0, 0, 0, 0});
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (tris[t].phase > 0) continue;
      const Rect b = mesh.cell_bbox(tris[t].elem);
      const double cx = (tris[t].v[0].x + tris[t].v[1].x + tris[t].v[2].x) / 3.0;
      const double cy = (tris[t].v[0].y + tris[t].v[1].y + tris[t].v[2].y) / 3.0;
      const auto& sloc = state->local(tris[t].elem);
      const auto& eu = enr->units.at(tris[t].elem);
      int unit = eu.uncut_unit;
      if (unit < 0 && !eu.tri_unit.empty()) {
        // locate the matching decomposition triangle for the unit
        const auto& ec = dec.cut.at(tris[t].elem);
        for (std::size_t j = 0; j < ec.tris.size(); ++j) {
          const double dx = (ec.tris[j].v[0].x + ec.tris[j].v[1].x + ec.tris[j].v[2].x) / 3 - cx;
          const double dy = (ec.tris[j].v[0].y + ec.tris[j].v[1].y + ec.tris[j].v[2].y) / 3 - cy;
          if (std::abs(dx) + std::abs(dy) < 1e-14 * mesh.edge(tris[t].elem.level)) {
            unit = eu.tri_unit[j];
            break;
          }
        }
      }
      if (unit < 0) continue;
      const Shape4<double> sh =
          shape_quad(b, (cx - b.x0) / b.width(), (cy - b.y0) / b.height());
      double exx = 0, eyy = 0, gxy = 0;
      for (std::size_t i = 0; i < sloc.fns.size(); ++i) {
        const int slot = enr->slot(sloc.fns[i], unit);
        double gx = 0, gy = 0;
        for (int kk = 0; kk < 4; ++kk) {
          gx += sloc.X(int(i), kk) * sh.gx[kk];
          gy += sloc.X(int(i), kk) * sh.gy[kk];
        }
        exx += gx * (*u)[2 * slot];
        eyy += gy * (*u)[2 * slot + 1];
        gxy += gy * (*u)[2 * slot] + gx * (*u)[2 * slot + 1];
      }
      const auto dloc = [&] {
        const auto& dl = stress->design->local(tris[t].elem);
        DesignLocal<double> m;
        m.p = stress->design->degree();
        m.bbox = b;
        m.scheme = stress->scheme;
        const int nloc = (m.p + 1) * (m.p + 1);
        for (int kk = 0; kk < nloc; ++kk) {
          double acc = 0;
          for (int i = 0; i < int(dl.fns.size()); ++i) acc += dl.X(i, kk) * (*stress->s)[dl.fns[i]];
          m.t[kk] = acc;
        }
        return m;
      }();
      const DMat<double> D = make_D(stress->elastic,
                                    dloc.youngs_at((cx - b.x0) / b.width(),
                                                   (cy - b.y0) / b.height()));
      const double sxx = D.c11 * exx + D.c12 * eyy;
      const double syy = D.c12 * exx + D.c11 * eyy;
      const double txy = D.c33 * gxy;
      const double vm = std::sqrt(sxx * sxx - sxx * syy + syy * syy + 3 * txy * txy);
      sig[t] = {sxx, syy, txy, vm};
    }
    os << "SCALARS sigma_xx double 1\nLOOKUP_TABLE default\n";
    for (const auto& sg : sig) os << sg[0] << "\n";
    os << "SCALARS sigma_yy double 1\nLOOKUP_TABLE default\n";
    for (const auto& sg : sig) os << sg[1] << "\n";
    os << "SCALARS sigma_xy double 1\nLOOKUP_TABLE default\n";
    for (const auto& sg : sig) os << sg[2] << "\n";
    os << "SCALARS von_mises double 1\nLOOKUP_TABLE default\n";
    for (const auto& sg : sig) os << sg[3] << "\n";
  }
  if (enr && state && u) {
    os << "POINT_DATA " << 3 * tris.size() << "\nVECTORS displacement double\n";
    for (const Tri& t : tris)
      for (int k = 0; k < 3; ++k) {
        // nudge the sample point inside the triangle so phase lookup is stable
        const double cx = (t.v[0].x + t.v[1].x + t.v[2].x) / 3.0;
        const double cy = (t.v[0].y + t.v[1].y + t.v[2].y) / 3.0;
        const double x = t.v[k].x + 1e-9 * (cx - t.v[k].x);
        const double y = t.v[k].y + 1e-9 * (cy - t.v[k].y);
        const Eigen::Vector2d d = eval_displacement(mesh, dec, *enr, *state, *u, x, y);
        os << d[0] << " " << d[1] << " 0\n";
      }
  }
}

}  // namespace lstop
