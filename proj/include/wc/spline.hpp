#pragma once

#include <utility>
#include <vector>

#include "wc/jet.hpp"

namespace wc {

struct SplineSegment {
  double center = 0;
  double half_width = 0;
  int degree = 3;
  // coefficients in the local variable a = x - center
  std::vector<double> coeffs;

  Jet3 eval_local(double a) const;
  Expr to_expr() const;
};

SplineSegment hermite_cubic(const Jet3& left, const Jet3& right, double eps);
SplineSegment hermite_quintic(const Jet3& left, const Jet3& right, double delta);
// Matches value and derivatives through order 3 at both ends.
SplineSegment hermite_septic(const Jet3& left, const Jet3& right, double w);

// Coefficient map of the degree-(2k+1) Hermite system: coeffs = M * data,
// data = (F(-w), F'(-w), .., F(w), F'(w), ..).
std::vector<double> hermite_coeffs(const double* left, const double* right, int k, double w);

Jet3Curve smooth_c1(const Jet3Curve& curve, double kink, double eps);
Jet3Curve smooth_c2_window(const Jet3Curve& curve, double x, double delta);
Jet3Curve smooth_c2(const Jet3Curve& curve, std::pair<double, double> kinks, double delta);
Jet3Curve two_stage_smooth(const Jet3Curve& curve, double kink, double eps, double delta);

}  // namespace wc
