#include "lstop/mma.hpp"

#include <cmath>
#include <limits>

#include "lstop/hmesh.hpp"

namespace lstop {

GcmmaOptimizer::GcmmaOptimizer(Eigen::VectorXd lb, Eigen::VectorXd ub, Options opt)
    : lb_(std::move(lb)), ub_(std::move(ub)), opt_(opt) {
  if (lb_.size() != ub_.size() || (ub_ - lb_).minCoeff() <= 0)
    throw ConfigError("GcmmaOptimizer: need lb < ub per variable");
}

void GcmmaOptimizer::reset() {
  outer_ = 0;
  xold1_.resize(0);
  xold2_.resize(0);
  low_.resize(0);
  upp_.resize(0);
}

void GcmmaOptimizer::rebind(Eigen::VectorXd lb, Eigen::VectorXd ub) {
  lb_ = std::move(lb);
  ub_ = std::move(ub);
  if (lb_.size() != ub_.size() || (ub_ - lb_).minCoeff() <= 0)
    throw ConfigError("GcmmaOptimizer: need lb < ub per variable");
  reset();
}

namespace {

struct Approx {
  Eigen::VectorXd p0, q0, p1, q1;
  double r0 = 0, r1 = 0;

  double f0(const Eigen::VectorXd& x, const Eigen::VectorXd& l, const Eigen::VectorXd& u) const {
    double v = r0;
    for (int j = 0; j < x.size(); ++j) v += p0[j] / (u[j] - x[j]) + q0[j] / (x[j] - l[j]);
    return v;
  }
  double f1(const Eigen::VectorXd& x, const Eigen::VectorXd& l, const Eigen::VectorXd& u) const {
    double v = r1;
    for (int j = 0; j < x.size(); ++j) v += p1[j] / (u[j] - x[j]) + q1[j] / (x[j] - l[j]);
    return v;
  }
};

Eigen::VectorXd primal_of_mu(double mu, const Approx& a, const Eigen::VectorXd& l,
                             const Eigen::VectorXd& u, const Eigen::VectorXd& alpha,
                             const Eigen::VectorXd& beta) {
  Eigen::VectorXd x(alpha.size());
  for (int j = 0; j < x.size(); ++j) {
    const double P = a.p0[j] + mu * a.p1[j];
    const double Q = a.q0[j] + mu * a.q1[j];
    const double sp = std::sqrt(std::max(P, 0.0)), sq = std::sqrt(std::max(Q, 0.0));
    double xj;
    if (sp + sq <= 0)
      xj = 0.5 * (l[j] + u[j]);
    else
      xj = (l[j] * sp + u[j] * sq) / (sp + sq);
    x[j] = std::clamp(xj, alpha[j], beta[j]);
  }
  return x;
}

}  // namespace

Eigen::VectorXd GcmmaOptimizer::step(const Eigen::VectorXd& x, double f0,
                                     const Eigen::VectorXd& df0, double g,
                                     const Eigen::VectorXd& dg, const Evaluator& eval) {
  const int n = int(x.size());
  if (!df0.allFinite() || !dg.allFinite() || !std::isfinite(f0) || !std::isfinite(g))
    throw NumericalError("gcmma_step: non-finite inputs");
  const Eigen::VectorXd range = ub_ - lb_;

  ++outer_;
  if (outer_ <= 2 || xold2_.size() != n) {
    low_ = x - opt_.asyinit * range;
    upp_ = x + opt_.asyinit * range;
  } else {
    for (int j = 0; j < n; ++j) {
      const double osc = (x[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
      const double gam = osc > 0 ? opt_.asyincr : (osc < 0 ? opt_.asydecr : 1.0);
      low_[j] = x[j] - gam * (xold1_[j] - low_[j]);
      upp_[j] = x[j] + gam * (upp_[j] - xold1_[j]);
      low_[j] = std::clamp(low_[j], x[j] - 10.0 * range[j], x[j] - 0.01 * range[j]);
      upp_[j] = std::clamp(upp_[j], x[j] + 0.01 * range[j], x[j] + 10.0 * range[j]);
    }
  }
  xold2_ = xold1_;
  xold1_ = x;

  Eigen::VectorXd alpha(n), beta(n);
  for (int j = 0; j < n; ++j) {
    alpha[j] = std::max({lb_[j], low_[j] + 0.1 * (x[j] - low_[j]), x[j] - 0.5 * range[j]});
    beta[j] = std::min({ub_[j], upp_[j] - 0.1 * (upp_[j] - x[j]), x[j] + 0.5 * range[j]});
  }

  double rho0 = std::max(opt_.rho_min, 0.1 / n * df0.cwiseAbs().dot(range));
  double rho1 = std::max(opt_.rho_min, 0.1 / n * dg.cwiseAbs().dot(range));
  rho_trace_.clear();
  hit_cap_ = false;

  Eigen::VectorXd xt = x;
  Eigen::VectorXd best_x = x;
  double best_f = std::numeric_limits<double>::infinity();
  double best_g = std::numeric_limits<double>::infinity();
  for (last_inner_ = 1; last_inner_ <= opt_.max_inner; ++last_inner_) {
    rho_trace_.push_back(rho0);
    Approx a;
    a.p0.resize(n);
    a.q0.resize(n);
    a.p1.resize(n);
    a.q1.resize(n);
    a.r0 = f0;
    a.r1 = g;
    for (int j = 0; j < n; ++j) {
      const double du = upp_[j] - x[j], dl = x[j] - low_[j];
      const double d0p = std::max(df0[j], 0.0), d0m = std::max(-df0[j], 0.0);
      const double d1p = std::max(dg[j], 0.0), d1m = std::max(-dg[j], 0.0);
      a.p0[j] = du * du * (1.001 * d0p + 0.001 * d0m + rho0 / range[j]);
      a.q0[j] = dl * dl * (0.001 * d0p + 1.001 * d0m + rho0 / range[j]);
      a.p1[j] = du * du * (1.001 * d1p + 0.001 * d1m + rho1 / range[j]);
      a.q1[j] = dl * dl * (0.001 * d1p + 1.001 * d1m + rho1 / range[j]);
      a.r0 -= a.p0[j] / du + a.q0[j] / dl;
      a.r1 -= a.p1[j] / du + a.q1[j] / dl;
    }

    // dual bisection on the single constraint multiplier
    double mu = 0.0;
    xt = primal_of_mu(0.0, a, low_, upp_, alpha, beta);
    if (a.f1(xt, low_, upp_) > 0) {
      double mu_hi = 1.0;
      while (a.f1(primal_of_mu(mu_hi, a, low_, upp_, alpha, beta), low_, upp_) > 0 &&
             mu_hi < 1e12)
        mu_hi *= 2.0;
      double mu_lo = 0.0;
      for (int it = 0; it < 100; ++it) {
        mu = 0.5 * (mu_lo + mu_hi);
        (a.f1(primal_of_mu(mu, a, low_, upp_, alpha, beta), low_, upp_) > 0 ? mu_lo : mu_hi) = mu;
      }
      mu = mu_hi;
      xt = primal_of_mu(mu, a, low_, upp_, alpha, beta);
    }

    // conservativity of both approximations at the trial point
    const auto [f0t, gt] = eval(xt);
    const double ft0 = a.f0(xt, low_, upp_);
    const double ft1 = a.f1(xt, low_, upp_);
    const bool ok0 = ft0 >= f0t - opt_.cons_slack * std::max(1.0, std::abs(f0t));
    const bool ok1 = ft1 >= gt - opt_.cons_slack * std::max(1.0, std::abs(gt));
    if (ok0 && ok1) return xt;
    // remember the best evaluated trial in case the cap is reached:
    // feasible points ranked by true objective, infeasible by violation
    const bool feas = gt <= 1e-6;
    const bool best_feas = best_g <= 1e-6;
    if ((feas && (!best_feas || f0t < best_f)) || (!feas && !best_feas && gt < best_g)) {
      best_x = xt;
      best_f = f0t;
      best_g = gt;
    }

    double d = 0;
    for (int j = 0; j < n; ++j) {
      const double dx = xt[j] - x[j];
      d += (upp_[j] - low_[j]) * dx * dx / ((upp_[j] - xt[j]) * (xt[j] - low_[j]) * range[j]);
    }
    d = std::max(d, 1e-12);
    if (!ok0) rho0 = std::min(1.1 * (rho0 + (f0t - ft0) / d), 10.0 * rho0);
    if (!ok1) rho1 = std::min(1.1 * (rho1 + (gt - ft1) / d), 10.0 * rho1);
  }
  hit_cap_ = true;
  last_inner_ = opt_.max_inner;
  return std::isfinite(best_f) || std::isfinite(best_g) ? best_x : xt;
}

bool check_convergence(const std::vector<double>& hist, double constraint, double tol,
                       double feasibility) {
  if (hist.size() < 6) return false;
  const std::size_t k = hist.size() - 1;
  double mean5 = 0;
  for (std::size_t i = k - 5; i < k; ++i) mean5 += hist[i];
  mean5 /= 5.0;
  if (mean5 == 0) return false;
  const double change = std::abs(hist[k] - hist[k - 1]) / std::abs(mean5);
  return change < tol && constraint <= feasibility;
}

}  // namespace lstop
