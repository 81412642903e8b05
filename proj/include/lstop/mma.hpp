#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace lstop {

/// Globally convergent method of moving asymptotes for box-constrained
/// problems with a single inequality constraint g(x) <= 0. The convex
/// separable subproblems are solved in the dual (one multiplier, bisection);
/// inner iterations raise the conservativeness parameters until the
/// approximations bound the true functions at the trial point.
struct GcmmaOptions {
  double asyinit = 0.05;  // initial asymptote spread
  double asydecr = 0.65;  // shrink on oscillation
  double asyincr = 1.05;  // expand on monotone progress
  int max_inner = 20;
  double rho_min = 1e-6;
  double cons_slack = 1e-9;  // relative slack in the conservativity test
};

class GcmmaOptimizer {
public:
  using Options = GcmmaOptions;

  /// Evaluates objective and constraint (no gradients) at a trial point.
  using Evaluator = std::function<std::pair<double, double>(const Eigen::VectorXd&)>;

  GcmmaOptimizer(Eigen::VectorXd lb, Eigen::VectorXd ub, Options opt = GcmmaOptions{});

  /// Forget iterate history and asymptotes (used at mesh refinements).
  void reset();

  Eigen::VectorXd step(const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& df0, double g,
                       const Eigen::VectorXd& dg, const Evaluator& eval);

  /// Rebuild for a new design size (bounds per variable).
  void rebind(Eigen::VectorXd lb, Eigen::VectorXd ub);

  int last_inner_count() const { return last_inner_; }
  bool last_hit_inner_cap() const { return hit_cap_; }
  const std::vector<double>& rho_trace() const { return rho_trace_; }
  const Eigen::VectorXd& low() const { return low_; }
  const Eigen::VectorXd& upp() const { return upp_; }

private:
  Eigen::VectorXd lb_, ub_;
  Options opt_;
  int outer_ = 0;
  Eigen::VectorXd xold1_, xold2_, low_, upp_;
  int last_inner_ = 0;
  bool hit_cap_ = false;
  std::vector<double> rho_trace_;
};

/// Converged when the objective change relative to the mean of the five
/// previous values drops below tol and the constraint is satisfied.
bool check_convergence(const std::vector<double>& objective_history, double constraint,
                       double tol = 1e-5, double feasibility = 1e-6);

}  // namespace lstop
