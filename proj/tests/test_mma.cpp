#include <doctest.h>

#include <cmath>

#include "lstop/hmesh.hpp"
#include "lstop/mma.hpp"

using namespace lstop;

namespace {

struct Smooth1D {
  double target;
  std::pair<double, double> fg(double x) const { return {(x - target) * (x - target), -1.0}; }
};

}  // namespace

TEST_CASE("1-variable convex quadratic converges to the analytic minimum") {
  GcmmaOptimizer opt(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.9);
  auto eval = [](const Eigen::VectorXd& v) {
    return std::pair<double, double>{(v[0] - 0.3) * (v[0] - 0.3), -1.0};
  };
  for (int k = 0; k < 30; ++k) {
    Eigen::VectorXd df(1), dg(1);
    df[0] = 2 * (x[0] - 0.3);
    dg[0] = 0;
    x = opt.step(x, (x[0] - 0.3) * (x[0] - 0.3), df, -1.0, dg, eval);
    CHECK(x[0] >= 0.0);
    CHECK(x[0] <= 1.0);
  }
  CHECK(std::abs(x[0] - 0.3) < 1e-4);
}

TEST_CASE("active constraint: optimum on g = 0") {
  GcmmaOptimizer opt(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.1);
  // objective decreasing in x, constraint x <= 0.5
  auto eval = [](const Eigen::VectorXd& v) {
    return std::pair<double, double>{1.0 - v[0], v[0] - 0.5};
  };
  for (int k = 0; k < 30; ++k) {
    Eigen::VectorXd df(1), dg(1);
    df[0] = -1.0;
    dg[0] = 1.0;
    x = opt.step(x, 1.0 - x[0], df, x[0] - 0.5, dg, eval);
  }
  CHECK(std::abs(x[0] - 0.5) < 1e-4);
}

TEST_CASE("two variables with coupling constraint reach the KKT point") {
  GcmmaOptimizer opt(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));
  Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 0.2);
  auto fg = [](const Eigen::VectorXd& v) {
    const double f = (v[0] - 1) * (v[0] - 1) + (v[1] - 1) * (v[1] - 1);
    return std::pair<double, double>{f, v[0] + v[1] - 1.0};
  };
  std::vector<double> hist;
  for (int k = 0; k < 40; ++k) {
    Eigen::VectorXd df(2), dg(2);
    df << 2 * (x[0] - 1), 2 * (x[1] - 1);
    dg << 1, 1;
    auto [f, g] = fg(x);
    hist.push_back(f);
    x = opt.step(x, f, df, g, dg, fg);
    // inner conservativeness multipliers never decrease
    for (std::size_t i = 1; i < opt.rho_trace().size(); ++i)
      CHECK(opt.rho_trace()[i] >= opt.rho_trace()[i - 1]);
  }
  CHECK(std::abs(x[0] - 0.5) < 1e-4);
  CHECK(std::abs(x[1] - 0.5) < 1e-4);
  // objective sequence non-increasing once feasible (convex test problem)
  for (std::size_t k = 6; k + 1 < hist.size(); ++k) CHECK(hist[k + 1] <= hist[k] + 1e-9);
}

TEST_CASE("iterates respect the box even with inward-pushing gradients") {
  GcmmaOptimizer opt(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3));
  Eigen::VectorXd x(3);
  x << 0.0, 1.0, 0.5;
  auto eval = [](const Eigen::VectorXd& v) {
    return std::pair<double, double>{-v.sum(), -1.0};
  };
  Eigen::VectorXd df = Eigen::VectorXd::Constant(3, -1.0);
  Eigen::VectorXd dg = Eigen::VectorXd::Zero(3);
  for (int k = 0; k < 60; ++k) {
    x = opt.step(x, -x.sum(), df, -1.0, dg, eval);
    CHECK(x.minCoeff() >= 0.0);
    CHECK(x.maxCoeff() <= 1.0);
  }
  CHECK(x.minCoeff() > 0.9);  // pushed to the upper bound
}

TEST_CASE("reset restores the initial asymptote spread") {
  GcmmaOptimizer opt(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));
  Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 0.4);
  auto eval = [](const Eigen::VectorXd& v) {
    return std::pair<double, double>{v.squaredNorm(), -1.0};
  };
  Eigen::VectorXd dg = Eigen::VectorXd::Zero(2);
  for (int k = 0; k < 5; ++k) x = opt.step(x, x.squaredNorm(), 2 * x, -1.0, dg, eval);
  opt.reset();
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(2, 0.7);
  opt.step(x0, x0.squaredNorm(), 2 * x0, -1.0, dg, eval);
  for (int j = 0; j < 2; ++j) {
    CHECK(opt.low()[j] == doctest::Approx(0.7 - 0.05).epsilon(1e-14));
    CHECK(opt.upp()[j] == doctest::Approx(0.7 + 0.05).epsilon(1e-14));
  }
}

TEST_CASE("non-finite inputs are rejected") {
  GcmmaOptimizer opt(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::VectorXd bad = Eigen::VectorXd::Constant(1, std::nan(""));
  auto eval = [](const Eigen::VectorXd&) { return std::pair<double, double>{0, -1}; };
  CHECK_THROWS_AS(opt.step(x, 0.0, bad, -1.0, Eigen::VectorXd::Zero(1), eval), NumericalError);
}

TEST_CASE("convergence check") {
  std::vector<double> h(10, 1.0);
  CHECK(check_convergence(h, 0.0));
  CHECK_FALSE(check_convergence(h, 0.01));  // infeasible
  std::vector<double> osc;
  for (int i = 0; i < 10; ++i) osc.push_back(1.0 + ((i % 2) ? 0.01 : -0.01));
  CHECK_FALSE(check_convergence(osc, 0.0));
  std::vector<double> shrink;
  for (int i = 0; i < 10; ++i) shrink.push_back(1.0 + 1e-6 * i);
  CHECK(check_convergence(shrink, 0.0));
  CHECK_FALSE(check_convergence({1.0, 1.0, 1.0}, 0.0));  // too short
}
