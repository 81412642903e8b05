#pragma once

#include <Eigen/Core>
#include <cmath>

namespace lstop {

/// Forward-mode scalar carrying a derivative row of bounded size.
///
/// Used by the element kernels to differentiate integrals with respect to
/// the local tensor-product design coefficients of one element, so the
/// capacity matches the largest local coefficient block, (p+1)^2 with p <= 3.
class Dual {
public:
  static constexpr int kMaxDirs = 16;
  using Grad = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, kMaxDirs>;

  Dual() : v_(0.0) {}
  Dual(double v) : v_(v) {}
  Dual(double v, int ndirs, int seed) : v_(v), g_(Grad::Zero(ndirs)) { g_(seed) = 1.0; }
  Dual(double v, Grad g) : v_(v), g_(std::move(g)) {}

  double value() const { return v_; }
  const Grad& grad() const { return g_; }
  bool constant() const { return g_.size() == 0; }

  Dual& operator+=(const Dual& o) {
    v_ += o.v_;
    add_grad(o);
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v_ -= o.v_;
    sub_grad(o);
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

  friend Dual operator-(const Dual& a) { return Dual(-a.v_, -a.g_); }
  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }

  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v_ * b.v_);
    if (!a.constant()) r.g_ = b.v_ * a.g_;
    if (!b.constant()) {
      if (r.constant())
        r.g_ = a.v_ * b.g_;
      else
        r.g_ += a.v_ * b.g_;
    }
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v_;
    Dual r(a.v_ * inv);
    if (!a.constant()) r.g_ = inv * a.g_;
    if (!b.constant()) {
      if (r.constant())
        r.g_ = (-r.v_ * inv) * b.g_;
      else
        r.g_ += (-r.v_ * inv) * b.g_;
    }
    return r;
  }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v_ < b.v_; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v_ > b.v_; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v_ <= b.v_; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v_ >= b.v_; }

  friend Dual sqrt(const Dual& a) {
    const double s = std::sqrt(a.v_);
    Dual r(s);
    if (!a.constant()) r.g_ = (0.5 / s) * a.g_;
    return r;
  }
  friend Dual exp(const Dual& a) {
    const double e = std::exp(a.v_);
    Dual r(e);
    if (!a.constant()) r.g_ = e * a.g_;
    return r;
  }
  /// pow with integer-like real exponent; a.value() > 0 expected when n < 1.
  friend Dual pow(const Dual& a, double n) {
    Dual r(std::pow(a.v_, n));
    if (!a.constant()) r.g_ = (n * std::pow(a.v_, n - 1.0)) * a.g_;
    return r;
  }

private:
  void add_grad(const Dual& o) {
    if (o.constant()) return;
    if (constant())
      g_ = o.g_;
    else
      g_ += o.g_;
  }
  void sub_grad(const Dual& o) {
    if (o.constant()) return;
    if (constant())
      g_ = -o.g_;
    else
      g_ -= o.g_;
  }

  double v_;
  Grad g_;
};

/// Plain value of a scalar (generic hook so kernels can branch on values).
inline double val(double x) { return x; }
inline double val(const Dual& x) { return x.value(); }

/// Derivative row of x w.r.t. seed direction k (0 for plain doubles).
inline double grad_entry(double, int) { return 0.0; }
inline double grad_entry(const Dual& x, int k) {
  return k < x.grad().size() ? x.grad()(k) : 0.0;
}

}  // namespace lstop
