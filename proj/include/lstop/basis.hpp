#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <iosfwd>

#include "lstop/bspline.hpp"
#include "lstop/hmesh.hpp"

namespace lstop {

enum class BasisMode { HB, THB };

/// One active hierarchical B-spline. Anchors index the tensor grid at the
/// function's level: support spans cells (ai..ai+p) x (aj..aj+p).
struct HierFunction {
  std::int32_t level, ai, aj;
  bool truncated = false;
};

/// Active (truncated) hierarchical B-spline basis over a snapshot of a
/// hierarchical mesh. Per active element it stores the extraction row of
/// every incident function, i.e. its representation in the (p+1)^2 local
/// tensor-product B-splines of that element's level.
class ThbBasis {
public:
  struct ElementLocal {
    std::vector<int> fns;  // global indices of incident functions
    Eigen::MatrixXd X;     // n_inc x (p+1)^2 extraction coefficients
  };

  static ThbBasis build(const HierarchicalMesh& mesh, int degree, BasisMode mode);

  int degree() const { return p_; }
  BasisMode mode() const { return mode_; }
  const HierarchicalMesh& mesh() const { return mesh_; }
  std::size_t size() const { return fns_.size(); }
  const std::vector<HierFunction>& functions() const { return fns_; }
  int index_of(int level, int ai, int aj) const;  // -1 if not active

  const ElementLocal& local(const ElemKey& e) const;

  /// Active element containing (x, y); throws outside the domain.
  ElemKey locate(double x, double y) const;

  double eval(const Eigen::VectorXd& coeffs, double x, double y) const;
  Eigen::Vector2d eval_grad(const Eigen::VectorXd& coeffs, double x, double y) const;

  /// Value and gradient at a local point of a given active element.
  void eval_local(const ElemKey& e, const Eigen::VectorXd& coeffs, double tx, double ty,
                  double* value, Eigen::Vector2d* grad) const;

  /// One value per active corner node, each evaluated through a fixed owner
  /// element so shared corners get bitwise identical values.
  NodalField nodal_values(const Eigen::VectorXd& coeffs) const;

  /// L2 projection of a field from another basis (same background grid)
  /// onto this basis.
  Eigen::VectorXd l2_project(const ThbBasis& from, const Eigen::VectorXd& coeffs) const;

  /// L2 projection of an arbitrary function onto this basis.
  Eigen::VectorXd project(const std::function<double(double, double)>& f) const;

  /// Gram matrix of this basis (SPD for THB).
  Eigen::SparseMatrix<double> gram() const;

  void dump_incidence(std::ostream& os) const;

  /// Max over functions of how many functions share an element with it.
  int max_stencil() const;

private:
  int p_ = 2;
  BasisMode mode_ = BasisMode::THB;
  HierarchicalMesh mesh_;
  std::vector<HierFunction> fns_;
  std::unordered_map<std::int64_t, int> fn_index_;  // packed (level,ai,aj) -> index
  std::unordered_map<ElemKey, ElementLocal, ElemKeyHash> locals_;

  static std::int64_t pack(int level, int ai, int aj);
};

/// Re-express a field given by HB coefficients in the THB basis built on the
/// same mesh and degree (the two bases span the same space).
Eigen::VectorXd hb_to_thb_coefficients(const ThbBasis& hb, const ThbBasis& thb,
                                       const Eigen::VectorXd& hb_coeffs);

}  // namespace lstop
