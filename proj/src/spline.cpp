#include "wc/spline.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace wc {

namespace {

// Inverse of the Hermite system in the scaled variable y = a / w on [-1, 1].
const Eigen::MatrixXd& scaled_inverse(int k) {
  static const auto build = [](int kk) {
    const int n = 2 * kk + 2;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int side = 0; side < 2; ++side) {
      const double y = side ? 1.0 : -1.0;
      for (int r = 0; r <= kk; ++r) {
        const int row = side * (kk + 1) + r;
        for (int i = r; i < n; ++i) {
          double f = 1;
          for (int q = 0; q < r; ++q) f *= i - q;
          A(row, i) = f * std::pow(y, i - r);
        }
      }
    }
    return Eigen::MatrixXd(A.fullPivLu().inverse());
  };
  static const Eigen::MatrixXd inv1 = build(1), inv2 = build(2), inv3 = build(3);
  return k == 1 ? inv1 : k == 2 ? inv2 : inv3;
}

SplineSegment solve(const Jet3& left, const Jet3& right, double w, int k) {
  if (!(w > 0)) throw PreconditionError("spline half width must be positive");
  if (!left.finite() || !right.finite()) throw PreconditionError("spline endpoint jets must be finite");
  const double l[4] = {left.value, left.d1, left.d2, left.d3}, r[4] = {right.value, right.d1, right.d2, right.d3};
  SplineSegment s;
  s.half_width = w;
  s.degree = 2 * k + 1;
  s.coeffs = hermite_coeffs(l, r, k, w);
  return s;
}

void check_window(const Jet3Curve& c, double a, double b, const char* what) {
  if (!(a > c.lo() && b < c.hi()))
    throw DomainError(std::string(what) + ": window [" + std::to_string(a) + ", " + std::to_string(b) +
                      "] exits curve domain");
}

}  // namespace

std::vector<double> hermite_coeffs(const double* left, const double* right, int k, double w) {
  if (k < 1 || k > 3) throw PreconditionError("hermite order must be 1, 2 or 3");
  const int n = 2 * k + 2;
  Eigen::VectorXd data(n);
  double wp = 1;
  for (int r = 0; r <= k; ++r) {
    data(r) = wp * left[r];
    data(k + 1 + r) = wp * right[r];
    wp *= w;
  }
  const Eigen::VectorXd g = scaled_inverse(k) * data;
  std::vector<double> c(n);
  double wi = 1;
  for (int i = 0; i < n; ++i) {
    c[i] = g(i) / wi;
    wi *= w;
  }
  return c;
}

Jet3 SplineSegment::eval_local(double a) const { return ex::poly(coeffs, 0.0)->eval(a); }

Expr SplineSegment::to_expr() const { return ex::poly(coeffs, center); }

SplineSegment hermite_cubic(const Jet3& left, const Jet3& right, double eps) { return solve(left, right, eps, 1); }

SplineSegment hermite_quintic(const Jet3& left, const Jet3& right, double delta) {
  return solve(left, right, delta, 2);
}

SplineSegment hermite_septic(const Jet3& left, const Jet3& right, double w) { return solve(left, right, w, 3); }

Jet3Curve smooth_c1(const Jet3Curve& curve, double kink, double eps) {
  if (!(eps > 0)) throw PreconditionError("smooth_c1: eps must be positive");
  const double a = kink - eps, b = kink + eps;
  check_window(curve, a, b, "smooth_c1");
  for (const auto& k : curve.kinks())
    if (k.x >= a && k.x <= b && k.x != kink)
      throw PreconditionError("smooth_c1: window overlaps another kink at " + std::to_string(k.x));
  auto seg = hermite_cubic(curve.eval(a, Side::left), curve.eval(b, Side::right), eps);
  seg.center = kink;
  return curve.splice(a, b, seg.to_expr());
}

Jet3Curve smooth_c2_window(const Jet3Curve& curve, double x, double delta) {
  if (!(delta > 0)) throw PreconditionError("smooth_c2: delta must be positive");
  const double a = x - delta, b = x + delta;
  check_window(curve, a, b, "smooth_c2");
  for (const auto& k : curve.kinks()) {
    if (k.x < a || k.x > b) continue;
    if (k.order < 2)
      throw PreconditionError("smooth_c2: input not C1 at " + std::to_string(k.x) + " (discontinuous order " +
                              std::to_string(k.order) + ")");
    if (k.x != x) throw PreconditionError("smooth_c2: window overlaps another kink at " + std::to_string(k.x));
  }
  auto seg = hermite_quintic(curve.eval(a, Side::left), curve.eval(b, Side::right), delta);
  seg.center = x;
  return curve.splice(a, b, seg.to_expr());
}

Jet3Curve smooth_c2(const Jet3Curve& curve, std::pair<double, double> kinks, double delta) {
  auto [x1, x2] = kinks;
  if (x1 > x2) std::swap(x1, x2);
  if (!(x2 - x1 > 2 * delta)) throw PreconditionError("smooth_c2: windows overlap");
  return smooth_c2_window(smooth_c2_window(curve, x1, delta), x2, delta);
}

Jet3Curve two_stage_smooth(const Jet3Curve& curve, double kink, double eps, double delta) {
  return smooth_c2(smooth_c1(curve, kink, eps), {kink - eps, kink + eps}, delta);
}

}  // namespace wc
