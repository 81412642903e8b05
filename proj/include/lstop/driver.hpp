#pragma once

#include <functional>
#include <string>

#include "lstop/config.hpp"
#include "lstop/functionals.hpp"
#include "lstop/mma.hpp"

namespace lstop {

struct IterRecord {
  int iter = 0;
  double S = 0, MA = 0, Pp = 0, Pphi = 0, Pgrad = 0;
  double objective = 0, constraint = 0;
  long long dofs_xfem = 0, dofs_fem_uniform = 0, dofs_design = 0;
  int refined = 0;  // 1 when the mesh changed before this iteration's solve
  double rho_shift = 0, w_s = 0;
};

struct OptHistory {
  std::vector<IterRecord> rows;
  void write_csv(const std::string& path) const;
  static OptHistory read_csv(const std::string& path);
};

/// Per-iteration view handed to observers (acceptance checks, plotting).
struct IterState {
  int iter;
  const HierarchicalMesh& mesh;
  const NodalField& phi;
  const CutDecomposition& dec;
  const Eigen::VectorXd& design;
  const ObjectiveBreakdown& bd;
  bool mesh_changed;
};

struct RunResult {
  OptHistory history;
  ObjectiveBreakdown final_bd;
  bool converged = false;
  int iterations = 0;
};

using IterObserver = std::function<void(const IterState&)>;

/// Full optimization loop: geometry pipeline, interface-uniformity
/// maintenance, analysis, adjoint gradients, GCMMA update, scheduled
/// refinement with L2 remap and optimizer restart, continuation, output.
RunResult run(const RunConfig& cfg, const std::string& out_dir, const IterObserver& obs = {});

struct EfficiencyFactors {
  double E_xfem = 0, R_xfem = 0, E_fem = 0, R_fem = 0;
};

/// DOF-count efficiency factors of an adaptive run against a uniform
/// baseline, truncated to the shorter run.
EfficiencyFactors efficiency_metrics(const OptHistory& adaptive, const OptHistory& uniform,
                                     double ns);

}  // namespace lstop
