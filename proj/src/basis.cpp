#include "lstop/basis.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <unordered_set>

#include "lstop/quadrature.hpp"

namespace lstop {

namespace {

/// Nested-domain predicates for the basis recursion. Omega^l is the union
/// of active elements with level >= l; all checks intersect supports with
/// the physical domain (a ghost layer of p anchors extends past it).
class DomainOracle {
public:
  DomainOracle(const HierarchicalMesh& mesh, int p) : mesh_(mesh), p_(p) {}

  bool has_ingrid_cell(int l, int ax, int ay) const {
    for (int b = 0; b <= p_; ++b)
      for (int a = 0; a <= p_; ++a)
        if (mesh_.in_grid({l, ax + a, ay + b})) return true;
    return false;
  }

  /// supp(f) ∩ Ω ⊆ Ω^l (vacuously true for supports outside Ω).
  bool in_level_domain(int l, int ax, int ay) const {
    const std::int64_t key = pack(l, ax, ay);
    auto it = memo_in_.find(key);
    if (it != memo_in_.end()) return it->second;
    bool ok = true;
    for (int b = 0; ok && b <= p_; ++b)
      for (int a = 0; ok && a <= p_; ++a) {
        const ElemKey c{l, ax + a, ay + b};
        if (!mesh_.in_grid(c)) continue;
        const auto cov = mesh_.cover(c);
        ok = cov == HierarchicalMesh::Cover::Active || cov == HierarchicalMesh::Cover::Finer;
      }
    memo_in_.emplace(key, ok);
    return ok;
  }

  /// supp(f) ∩ Ω ⊆ Ω^{l+1} for a level-l function.
  bool in_next_domain(int l, int ax, int ay) const {
    bool ok = true;
    for (int b = 0; ok && b <= p_; ++b)
      for (int a = 0; ok && a <= p_; ++a) {
        const ElemKey c{l, ax + a, ay + b};
        if (!mesh_.in_grid(c)) continue;
        ok = mesh_.cover(c) == HierarchicalMesh::Cover::Finer;
      }
    return ok;
  }

  bool active(int l, int ax, int ay) const {
    if (!has_ingrid_cell(l, ax, ay)) return false;
    if (l > 0 && !in_level_domain(l, ax, ay)) return false;
    return !in_next_domain(l, ax, ay);
  }

private:
  static std::int64_t pack(int l, int ai, int aj) {
    return (std::int64_t(l) << 52) | (std::int64_t(ai + 8) << 26) | std::int64_t(aj + 8);
  }
  const HierarchicalMesh& mesh_;
  int p_;
  mutable std::unordered_map<std::int64_t, bool> memo_in_;
};

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[int(k)] = v[idx[k]];
  return out;
}

}  // namespace

std::int64_t ThbBasis::pack(int level, int ai, int aj) {
  return (std::int64_t(level) << 52) | (std::int64_t(ai + 8) << 26) | std::int64_t(aj + 8);
}

int ThbBasis::index_of(int level, int ai, int aj) const {
  auto it = fn_index_.find(pack(level, ai, aj));
  return it == fn_index_.end() ? -1 : it->second;
}

const ThbBasis::ElementLocal& ThbBasis::local(const ElemKey& e) const {
  auto it = locals_.find(e);
  if (it == locals_.end()) throw InvariantError("ThbBasis: element has no extraction data");
  return it->second;
}

ThbBasis ThbBasis::build(const HierarchicalMesh& mesh, int degree, BasisMode mode) {
  if (degree < 1 || degree > 3) throw ConfigError("ThbBasis: degree must be in {1,2,3}");
  std::string offender;
  if (!mesh.check_two_one_balance(&offender))
    throw InvariantError("ThbBasis: mesh violates 2:1 balance at " + offender);

  ThbBasis B;
  B.p_ = degree;
  B.mode_ = mode;
  B.mesh_ = mesh;
  const int p = degree;
  DomainOracle oracle(B.mesh_, p);

  const int L = B.mesh_.max_active_level();
  for (int l = 0; l <= L; ++l) {
    const int nax = (mesh.nx() << l) + p;  // anchors -p .. nx*2^l - 1
    const int nay = (mesh.ny() << l) + p;
    for (int aj = -p; aj < nay - p; ++aj)
      for (int ai = -p; ai < nax - p; ++ai)
        if (oracle.active(l, ai, aj)) {
          B.fn_index_[pack(l, ai, aj)] = int(B.fns_.size());
          B.fns_.push_back({l, ai, aj, false});
        }
  }

  const std::vector<double> sub = subdivision_coeffs(p);
  const int nloc = (p + 1) * (p + 1);
  const bool thb = mode == BasisMode::THB;

  for (const ElemKey& E : B.mesh_.active_elements()) {
    ElementLocal loc;
    std::vector<Eigen::VectorXd> rows;
    for (int l = 0; l <= E.level; ++l) {
      const int anci = E.i >> (E.level - l);
      const int ancj = E.j >> (E.level - l);
      for (int b = 0; b <= p; ++b)
        for (int a = 0; a <= p; ++a) {
          const int ax = anci - p + a, ay = ancj - p + b;
          const int fidx = B.index_of(l, ax, ay);
          if (fidx < 0) continue;
          // Truncation descent restricted to the window over E.
          Eigen::VectorXd comp = Eigen::VectorXd::Zero(nloc);
          comp[a + (p + 1) * b] = 1.0;
          for (int m = l; m < E.level; ++m) {
            const int wi = E.i >> (E.level - m), wj = E.j >> (E.level - m);
            const int wi1 = E.i >> (E.level - m - 1), wj1 = E.j >> (E.level - m - 1);
            Eigen::VectorXd next = Eigen::VectorXd::Zero(nloc);
            for (int ob = 0; ob <= p; ++ob)
              for (int oa = 0; oa <= p; ++oa) {
                const double c = comp[oa + (p + 1) * ob];
                if (c == 0.0) continue;
                const int cax = wi - p + oa, cay = wj - p + ob;
                for (int jy = 0; jy <= p + 1; ++jy) {
                  const int by = 2 * cay + jy;
                  const int oy = by - (wj1 - p);
                  if (oy < 0 || oy > p) continue;
                  for (int jx = 0; jx <= p + 1; ++jx) {
                    const int bx = 2 * cax + jx;
                    const int ox = bx - (wi1 - p);
                    if (ox < 0 || ox > p) continue;
                    if (thb && oracle.in_level_domain(m + 1, bx, by)) {
                      B.fns_[fidx].truncated = true;
                      continue;
                    }
                    next[ox + (p + 1) * oy] += c * sub[jx] * sub[jy];
                  }
                }
              }
            comp.swap(next);
          }
          if (comp.lpNorm<Eigen::Infinity>() > 1e-14) {
            loc.fns.push_back(fidx);
            rows.push_back(std::move(comp));
          }
        }
    }
    loc.X.resize(int(rows.size()), nloc);
    for (int r = 0; r < int(rows.size()); ++r) loc.X.row(r) = rows[r];
    B.locals_.emplace(E, std::move(loc));
  }
  return B;
}

ElemKey ThbBasis::locate(double x, double y) const {
  const Rect& d = mesh_.domain();
  const double ex = 1e-12 * (1.0 + std::abs(d.width()));
  const double ey = 1e-12 * (1.0 + std::abs(d.height()));
  if (x < d.x0 - ex || x > d.x1 + ex || y < d.y0 - ey || y > d.y1 + ey)
    throw Error("ThbBasis::locate: point outside domain");
  ElemKey k{0, std::clamp(int((x - d.x0) / mesh_.hx(0)), 0, mesh_.nx() - 1),
            std::clamp(int((y - d.y0) / mesh_.hy(0)), 0, mesh_.ny() - 1)};
  while (!mesh_.is_active(k)) {
    const Rect b = mesh_.cell_bbox(k);
    const int a = x >= 0.5 * (b.x0 + b.x1) ? 1 : 0;
    const int c = y >= 0.5 * (b.y0 + b.y1) ? 1 : 0;
    if (k.level > HierarchicalMesh::kMaxLevel) throw InvariantError("locate: broken tree");
    k = k.child(a, c);
  }
  return k;
}

void ThbBasis::eval_local(const ElemKey& e, const Eigen::VectorXd& coeffs, double tx, double ty,
                          double* value, Eigen::Vector2d* grad) const {
  const ElementLocal& loc = local(e);
  const int p = p_;
  double Nx[4], Ny[4], dNx[4], dNy[4];
  segment_values(p, tx, Nx);
  segment_values(p, ty, Ny);
  if (grad) {
    segment_derivs(p, tx, dNx);
    segment_derivs(p, ty, dNy);
  }
  Eigen::VectorXd tq = loc.X.transpose() * gather(coeffs, loc.fns);
  double v = 0, gx = 0, gy = 0;
  for (int b = 0; b <= p; ++b)
    for (int a = 0; a <= p; ++a) {
      const double c = tq[a + (p + 1) * b];
      v += c * Nx[a] * Ny[b];
      if (grad) {
        gx += c * dNx[a] * Ny[b];
        gy += c * Nx[a] * dNy[b];
      }
    }
  if (value) *value = v;
  if (grad) {
    const Rect bb = mesh_.cell_bbox(e);
    (*grad)(0) = gx / bb.width();
    (*grad)(1) = gy / bb.height();
  }
}

double ThbBasis::eval(const Eigen::VectorXd& coeffs, double x, double y) const {
  const ElemKey e = locate(x, y);
  const Rect b = mesh_.cell_bbox(e);
  double v;
  eval_local(e, coeffs, (x - b.x0) / b.width(), (y - b.y0) / b.height(), &v, nullptr);
  return v;
}

Eigen::Vector2d ThbBasis::eval_grad(const Eigen::VectorXd& coeffs, double x, double y) const {
  const ElemKey e = locate(x, y);
  const Rect b = mesh_.cell_bbox(e);
  Eigen::Vector2d g;
  eval_local(e, coeffs, (x - b.x0) / b.width(), (y - b.y0) / b.height(), nullptr, &g);
  return g;
}

NodalField ThbBasis::nodal_values(const Eigen::VectorXd& coeffs) const {
  NodalField out;
  static const double lc[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  for (const ElemKey& e : mesh_.active_elements()) {
    const auto nodes = mesh_.corner_nodes(e);
    for (int c = 0; c < 4; ++c) {
      if (out.values.count(nodes[c])) continue;
      double v;
      eval_local(e, coeffs, lc[c][0], lc[c][1], &v, nullptr);
      out.values[nodes[c]] = v;
    }
  }
  return out;
}

Eigen::SparseMatrix<double> ThbBasis::gram() const {
  const int n = int(size());
  std::vector<Eigen::Triplet<double>> trips;
  const auto q1 = gauss01(p_ + 1);
  for (const ElemKey& e : mesh_.active_elements()) {
    const ElementLocal& loc = local(e);
    const int ni = int(loc.fns.size());
    if (ni == 0) continue;
    Eigen::MatrixXd Ke = Eigen::MatrixXd::Zero(ni, ni);
    const Rect b = mesh_.cell_bbox(e);
    const double jac = b.width() * b.height();
    double Nx[4], Ny[4];
    Eigen::VectorXd Nq((p_ + 1) * (p_ + 1));
    for (const auto& qx : q1)
      for (const auto& qy : q1) {
        segment_values(p_, qx.x, Nx);
        segment_values(p_, qy.x, Ny);
        for (int bb = 0; bb <= p_; ++bb)
          for (int aa = 0; aa <= p_; ++aa) Nq[aa + (p_ + 1) * bb] = Nx[aa] * Ny[bb];
        const Eigen::VectorXd v = loc.X * Nq;
        Ke.noalias() += (qx.w * qy.w * jac) * v * v.transpose();
      }
    for (int i = 0; i < ni; ++i)
      for (int j = 0; j < ni; ++j) trips.emplace_back(loc.fns[i], loc.fns[j], Ke(i, j));
  }
  Eigen::SparseMatrix<double> G(n, n);
  G.setFromTriplets(trips.begin(), trips.end());
  return G;
}

namespace {
void boxes_under(const HierarchicalMesh& old, const ElemKey& k, std::vector<Rect>& out) {
  switch (old.cover(k)) {
    case HierarchicalMesh::Cover::Active:
    case HierarchicalMesh::Cover::ByCoarser:
      out.push_back(old.cell_bbox(k));
      return;
    case HierarchicalMesh::Cover::Finer:
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) boxes_under(old, k.child(a, b), out);
      return;
    default:
      throw InvariantError("l2_project: meshes do not share a background grid");
  }
}
}  // namespace

Eigen::VectorXd ThbBasis::l2_project(const ThbBasis& from, const Eigen::VectorXd& coeffs) const {
  const HierarchicalMesh& om = from.mesh();
  if (om.nx() != mesh_.nx() || om.ny() != mesh_.ny() ||
      std::abs(om.domain().x0 - mesh_.domain().x0) > 1e-14 ||
      std::abs(om.domain().x1 - mesh_.domain().x1) > 1e-14)
    throw InvariantError("l2_project: bases live on different domains");

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(size());
  const int nq = std::max(p_, from.degree()) + 1;
  const auto q1 = gauss01(nq);
  double Nx[4], Ny[4];
  Eigen::VectorXd Nq((p_ + 1) * (p_ + 1));
  for (const ElemKey& e : mesh_.active_elements()) {
    const ElementLocal& loc = local(e);
    if (loc.fns.empty()) continue;
    const Rect eb = mesh_.cell_bbox(e);
    std::vector<Rect> boxes;
    boxes_under(om, e, boxes);
    for (const Rect& bx : boxes) {
      const double jac = bx.width() * bx.height();
      for (const auto& qx : q1)
        for (const auto& qy : q1) {
          const double x = bx.x0 + qx.x * bx.width();
          const double y = bx.y0 + qy.x * bx.height();
          segment_values(p_, (x - eb.x0) / eb.width(), Nx);
          segment_values(p_, (y - eb.y0) / eb.height(), Ny);
          for (int b = 0; b <= p_; ++b)
            for (int a = 0; a <= p_; ++a) Nq[a + (p_ + 1) * b] = Nx[a] * Ny[b];
          const double fold = from.eval(coeffs, x, y);
          const double w = qx.w * qy.w * jac * fold;
          const Eigen::VectorXd v = loc.X * Nq;
          for (int i = 0; i < int(loc.fns.size()); ++i) rhs[loc.fns[i]] += w * v[i];
        }
    }
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(gram());
  if (ldlt.info() != Eigen::Success)
    throw NumericalError("l2_project: Gram matrix factorization failed");
  return ldlt.solve(rhs);
}

Eigen::VectorXd ThbBasis::project(const std::function<double(double, double)>& f) const {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(size());
  const auto q1 = gauss01(std::min(p_ + 2, 5));
  double Nx[4], Ny[4];
  Eigen::VectorXd Nq((p_ + 1) * (p_ + 1));
  for (const ElemKey& e : mesh_.active_elements()) {
    const ElementLocal& loc = local(e);
    if (loc.fns.empty()) continue;
    const Rect b = mesh_.cell_bbox(e);
    const double jac = b.width() * b.height();
    for (const auto& qx : q1)
      for (const auto& qy : q1) {
        segment_values(p_, qx.x, Nx);
        segment_values(p_, qy.x, Ny);
        for (int bb = 0; bb <= p_; ++bb)
          for (int aa = 0; aa <= p_; ++aa) Nq[aa + (p_ + 1) * bb] = Nx[aa] * Ny[bb];
        const double w =
            qx.w * qy.w * jac * f(b.x0 + qx.x * b.width(), b.y0 + qy.x * b.height());
        const Eigen::VectorXd v = loc.X * Nq;
        for (int i = 0; i < int(loc.fns.size()); ++i) rhs[loc.fns[i]] += w * v[i];
      }
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(gram());
  if (ldlt.info() != Eigen::Success)
    throw NumericalError("project: Gram matrix factorization failed");
  return ldlt.solve(rhs);
}

void ThbBasis::dump_incidence(std::ostream& os) const {
  for (const ElemKey& e : mesh_.active_elements()) {
    const ElementLocal& loc = local(e);
    os << "elem(" << e.level << "," << e.i << "," << e.j << "):";
    for (int f : loc.fns)
      os << " f" << f << "(l" << fns_[f].level << "," << fns_[f].ai << "," << fns_[f].aj << ")";
    os << "\n";
  }
}

int ThbBasis::max_stencil() const {
  std::vector<std::unordered_set<int>> overlap(size());
  for (const auto& [e, loc] : locals_) {
    (void)e;
    for (int i : loc.fns)
      for (int j : loc.fns) overlap[i].insert(j);
  }
  int m = 0;
  for (const auto& s : overlap) m = std::max(m, int(s.size()));
  return m;
}

namespace {
void push_plain(const ThbBasis& thb, const DomainOracle& oracle, const std::vector<double>& sub,
                int l, int ax, int ay, double c, Eigen::VectorXd& out) {
  if (!oracle.has_ingrid_cell(l, ax, ay)) return;
  const int p = thb.degree();
  const int idx = thb.index_of(l, ax, ay);
  if (idx >= 0) {
    out[idx] += c;
    // The active THB function covers the kept part; its truncated residue
    // consists of the dropped finer components, pushed down recursively.
    for (int jy = 0; jy <= p + 1; ++jy)
      for (int jx = 0; jx <= p + 1; ++jx) {
        const int bx = 2 * ax + jx, by = 2 * ay + jy;
        if (oracle.in_level_domain(l + 1, bx, by))
          push_plain(thb, oracle, sub, l + 1, bx, by, c * sub[jx] * sub[jy], out);
      }
  } else {
    // Inactive with support inside Omega^{l+1}: expand one level fully.
    for (int jy = 0; jy <= p + 1; ++jy)
      for (int jx = 0; jx <= p + 1; ++jx)
        push_plain(thb, oracle, sub, l + 1, 2 * ax + jx, 2 * ay + jy, c * sub[jx] * sub[jy], out);
  }
}
}  // namespace

Eigen::VectorXd hb_to_thb_coefficients(const ThbBasis& hb, const ThbBasis& thb,
                                       const Eigen::VectorXd& hb_coeffs) {
  if (hb.size() != thb.size() || hb.degree() != thb.degree())
    throw InvariantError("hb_to_thb: bases must share mesh and degree");
  const std::vector<double> sub = subdivision_coeffs(hb.degree());
  DomainOracle oracle(thb.mesh(), thb.degree());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(thb.size());
  for (std::size_t i = 0; i < hb.size(); ++i) {
    const HierFunction& f = hb.functions()[i];
    push_plain(thb, oracle, sub, f.level, f.ai, f.aj, hb_coeffs[int(i)], out);
  }
  return out;
}

}  // namespace lstop
