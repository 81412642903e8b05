#pragma once

#include "lstop/analysis.hpp"

namespace lstop {

/// Objective weights and normalizers of the optimization problem. Reported
/// integral quantities are scaled by report_factor (2 for half models using
/// symmetry) so they refer to the full structure.
struct FunctionalWeights {
  double w_s = 0.9, w_m = 0.0;
  double c_p = 0.025, c_phi = 0.5;
  double c_m = 0.4;
  double S0 = 59.12, M0 = 1.0, P0 = 6.0;
  double V_total = 6.0;  // reference volume of the full design domain
  double report_factor = 2.0;
};

struct ObjectiveBreakdown {
  double S = 0;      // int eps:sigma over the (full) structure
  double MA = 0;     // solid-phase mass
  double Pp = 0;     // interface perimeter
  double Pphi = 0;   // level set value penalty
  double Pgrad = 0;  // level set gradient penalty
  double M_total = 0;
  double Z = 0;
  double objective = 0;
  double g_mass = 0;
  int dofs_xfem = 0;
  long long dofs_fem_uniform = 0;

  void combine(const FunctionalWeights& w) {
    M_total = w.V_total;  // rho0 = 1 reference density
    Z = w.w_s * S / w.S0 + w.w_m * MA / w.M0;
    objective = Z + w.c_p * Pp / w.P0 + w.c_phi * (Pphi + Pgrad) / w.P0;
    g_mass = MA / M_total - w.c_m;
  }
};

/// Shared inputs of the functional evaluation and gradient passes.
struct FunctionalInputs {
  const HierarchicalMesh* mesh;
  const ThbBasis* design;
  const ThbBasis* state;
  const Eigen::VectorXd* s;
  SchemeParams scheme;
  ElasticParams elastic;
  const BCs* bcs;
  const CutDecomposition* dec;
  const EnrichmentMap* enr;
  const LonField* lon;
  RegParams reg;
  FunctionalWeights weights;
};

ObjectiveBreakdown eval_functionals(const FunctionalInputs& in, const LinearSystem& sys,
                                    const Eigen::VectorXd& u);

/// Adjoint solve for a response with right-hand side dF/du.
Eigen::VectorXd adjoint_solve(const LinearSystem& sys, const Eigen::VectorXd& dF_du);

struct GradientVector {
  ObjectiveBreakdown bd;
  Eigen::VectorXd d_objective, d_gmass;
  Eigen::VectorXd dS, dMA, dPp, dPphi, dPgrad;  // reported-scale per-term gradients
};

/// Total design derivative of every objective term by the adjoint approach
/// with discrete geometry sensitivities.
GradientVector total_gradient(const FunctionalInputs& in, const LinearSystem& sys,
                              const Eigen::VectorXd& u);

}  // namespace lstop
