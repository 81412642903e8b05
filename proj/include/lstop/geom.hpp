#pragma once

#include <Eigen/Dense>

#include "lstop/basis.hpp"
#include "lstop/cutcell.hpp"
#include "lstop/hmesh.hpp"

namespace lstop {

enum class DesignScheme { Plain, Combined };

/// Design-to-material mapping parameters. In the combined scheme one field
/// s in [0,1] drives both the level set and a SIMP-type stiffness; in the
/// plain scheme the design variables are the level set coefficients.
struct SchemeParams {
  DesignScheme scheme = DesignScheme::Combined;
  double phi_scale = 0.125;  // 5 * h_init by default in configs
  double phi_thres = 0.5;    // held constant
  double rho_shift = 0.2;    // continuation parameter, driven to 1
  double rho0 = 1.0;
  double E0 = 1.0;
  double beta_simp = 2.0;

  double snap_eps() const { return 1e-8 * phi_scale; }
};

template <class T>
T phi_of_s(const SchemeParams& sp, const T& s) {
  if (sp.scheme == DesignScheme::Plain) return s;
  return T(sp.phi_scale) * (T(sp.phi_thres) - s);
}

/// Density inside the solid phase. The void branch of the interpolation is
/// realized by the phase decomposition, so the solid branch extends
/// linearly below the threshold (clamped at zero) and stays differentiable
/// where solid integrals sample it.
template <class T>
T rho_solid(const SchemeParams& sp, const T& s) {
  if (sp.scheme == DesignScheme::Plain) return T(sp.rho0);
  T r = T(sp.rho_shift) +
        (T(sp.rho0) - T(sp.rho_shift)) * (s - T(sp.phi_thres)) / (T(1.0) - T(sp.phi_thres));
  if (val(r) < 0.0) return T(0.0);
  if (val(r) > sp.rho0) return T(sp.rho0);
  return r;
}

template <class T>
T youngs_solid(const SchemeParams& sp, const T& s) {
  if (sp.scheme == DesignScheme::Plain) return T(sp.E0);
  return T(sp.E0) * pow(rho_solid(sp, s), sp.beta_simp);
}

/// Level set coefficients from the design vector (linearity of the scheme
/// commutes with the basis summation).
Eigen::VectorXd material_phi_coeffs(const SchemeParams& sp, const Eigen::VectorXd& s);

/// Snap nodal values away from zero: |phi| < eps -> +-eps, sign preserved,
/// exact zero treated as void side.
void snap_nodal(NodalField& phi, double eps);
inline double snap_value(double v, double eps) {
  if (v >= 0 && v < eps) return eps;
  if (v < 0 && v > -eps) return -eps;
  return v;
}

/// Cut-element decomposition plus per-element classification of the whole
/// active mesh (corner values snapped).
struct CutDecomposition {
  std::unordered_map<ElemKey, ElementCut<double>, ElemKeyHash> cut;
  std::unordered_map<ElemKey, std::array<double, 4>, ElemKeyHash> corner_phi;
  std::unordered_map<ElemKey, PhaseClass, ElemKeyHash> phase;

  PhaseClass phase_of(const ElemKey& k) const { return phase.at(k); }
  double solid_area() const;
  double interface_perimeter() const;
};

CutDecomposition decompose_cut_elements(const HierarchicalMesh& mesh, const NodalField& snapped,
                                        double snap_eps);

/// Level-of-neighborhood ring field: nodes of intersected elements start at
/// one, each extra loop widens the region and raises values by one.
struct LonField {
  std::unordered_map<NodeKey, double, NodeKeyHash> I;
  int I_max = 1;
  double at(const NodeKey& n) const {
    auto it = I.find(n);
    return it == I.end() ? 0.0 : it->second;
  }
};

LonField compute_lon(const HierarchicalMesh& mesh, const CutDecomposition& dec, int n_lon);

inline double interface_weight(double I_value, int I_max, double gamma_I) {
  const double r = I_value / double(I_max) - 1.0;
  return std::exp(-gamma_I * r * r);
}

/// Regular grid of circular holes for the initial-seeding scheme.
struct HolePattern {
  int rows = 0, cols = 0;
  double radius = 0.0;
};

/// Level set coefficients for an initial hole pattern: the signed profile
/// (positive inside holes, -phi_target in the bulk) is clamped to the
/// regularization band and L2-projected onto the basis.
Eigen::VectorXd seed_initial_holes(const ThbBasis& basis, const HolePattern& pattern,
                                   double phi_target);

}  // namespace lstop
