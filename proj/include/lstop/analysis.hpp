#pragma once

#include <Eigen/Sparse>
#include <iosfwd>

#include "lstop/basis.hpp"
#include "lstop/elastic_kernels.hpp"
#include "lstop/geom.hpp"

namespace lstop {

/// Axis-aligned boundary condition segments on the domain boundary.
struct DirichletSegment {
  double x0, y0, x1, y1;
  bool fix_x = false, fix_y = false;
};
struct NeumannSegment {
  double x0, y0, x1, y1;
  double tx = 0, ty = 0;
};

struct BCs {
  std::vector<DirichletSegment> dirichlet;
  std::vector<NeumannSegment> neumann;
  /// Impose exact_u on the immersed interface via Nitsche (verification use).
  bool dirichlet_on_interface = false;
  std::function<void(double, double, double*, double*)> exact_u;
};

/// Interior face between active elements; geometry is the edge of the finer
/// (or equal-level, canonical) side, with endpoint level set values from
/// that side's corners conditioning the solid sub-interval.
struct InteriorFace {
  ElemKey self, other;  // self owns the face geometry
  int edge;             // 0=W 1=E 2=S 3=N of self
  V2T<double> p0, p1;
  double phi0, phi1;
};

std::vector<InteriorFace> interior_faces(const HierarchicalMesh& mesh,
                                         const CutDecomposition& dec);

struct BoundaryFace {
  ElemKey elem;
  int edge;
  V2T<double> p0, p1;
  double phi0, phi1;
};

std::vector<BoundaryFace> boundary_faces(const HierarchicalMesh& mesh,
                                         const CutDecomposition& dec);

/// Overlap of an axis-aligned boundary-condition segment with an element
/// edge, as a parametric range on the edge. False when not collinear.
bool bc_segment_overlap(const Rect& b, int edge, double sx0, double sy0, double sx1, double sy1,
                        double tol, double* t0, double* t1);

/// Heaviside enrichment bookkeeping. Solid "units" are the connected pieces
/// of solid material per element (whole element when uncut, one per solid
/// triangle group when cut). Units connect across faces through the shared
/// solid interval, producing the global component graph used for island
/// springs, and per state function the local components within its support
/// that become enrichment levels.
struct EnrichmentMap {
  struct ElemUnits {
    int uncut_unit = -1;
    std::vector<int> tri_unit;  // parallel to ElementCut::tris, -1 for void
  };

  std::unordered_map<ElemKey, ElemUnits, ElemKeyHash> units;
  int n_units = 0;
  std::vector<ElemKey> unit_elem;
  std::vector<int> unit_comp;  // global solid component per unit
  // per component: bitmask of displacement components fixed by touched
  // Dirichlet segments (bit 0 = x, bit 1 = y); springs stay on unless both
  // are constrained somewhere on the component
  std::vector<int> comp_fix_mask;
  int n_comps = 0;
  bool comp_supported(int c) const { return comp_fix_mask[c] == 3; }

  std::vector<int> fn_slot_base;  // per state function
  std::vector<std::unordered_map<int, int>> fn_unit_m;  // per fn: unit -> level m
  int n_slots = 0;

  int ndof() const { return 2 * n_slots; }
  int levels_of(int fn) const;
  int slot(int fn, int unit) const {
    return fn_slot_base[fn] + fn_unit_m[fn].at(unit);
  }
  /// gamma_spring of the unit's component (1 = floating island).
  double gamma_spring(int unit) const { return comp_supported(unit_comp[unit]) ? 0.0 : 1.0; }

  /// Solid unit with a triangle edge on the given element edge overlapping
  /// the parametric range [lo,hi] of that edge; -1 if none.
  int unit_at_edge(const HierarchicalMesh& mesh, const CutDecomposition& dec, const ElemKey& e,
                   int edge, double lo = 0.0, double hi = 1.0) const;
};

EnrichmentMap build_enrichment(const HierarchicalMesh& mesh, const CutDecomposition& dec,
                               const ThbBasis& state, const BCs& bcs);

/// Island spring indicator per global solid component.
std::vector<char> detect_islands(const EnrichmentMap& enr);

struct LinearSystem {
  Eigen::SparseMatrix<double> K;       // full operator
  Eigen::SparseMatrix<double> K_bulk;  // elastic bulk part only
  Eigen::VectorXd f;
  int ndof = 0;
};

LinearSystem assemble(const HierarchicalMesh& mesh, const ThbBasis& design,
                      const Eigen::VectorXd& s, const SchemeParams& scheme,
                      const ElasticParams& elastic, const BCs& bcs, const CutDecomposition& dec,
                      const EnrichmentMap& enr, const ThbBasis& state);

Eigen::VectorXd solve(const LinearSystem& sys);

/// Reusable factorization (forward plus adjoint solves share it).
class Factorized {
public:
  explicit Factorized(const LinearSystem& sys);
  /// Solve with iterative refinement to a 1e-12 relative residual.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

private:
  const LinearSystem* sys_;
  Eigen::VectorXd dinv_;  // symmetric Jacobi equilibration
  Eigen::SparseMatrix<double> Ks_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

/// Coordinate-format text dump of the operator (debugging aid).
void dump_matrix(const Eigen::SparseMatrix<double>& K, std::ostream& os);

/// State extraction expanded to displacement pairs: rows are local state
/// function DOFs (2 per incident function), columns the 8 bilinear DOFs.
Eigen::MatrixXd state_expansion(const ThbBasis::ElementLocal& loc);

/// Displacement at a physical point (zero in void).
Eigen::Vector2d eval_displacement(const HierarchicalMesh& mesh, const CutDecomposition& dec,
                                  const EnrichmentMap& enr, const ThbBasis& state,
                                  const Eigen::VectorXd& u, double x, double y);

}  // namespace lstop
