#pragma once

#include <memory>
#include <ostream>
#include <vector>

#include "wc/jet.hpp"
#include "wc/verify.hpp"

namespace wc {

// d[i][j] = d^i/da^i d^j/db^j
struct PartialTable {
  double d[4][4] = {};
  BiJet bijet() const { return {d[0][0], d[1][0], d[0][1], d[2][0], d[1][1], d[0][2]}; }
};

class BiField {
 public:
  virtual ~BiField() = default;
  virtual PartialTable table(double a, double b) const = 0;
  BiJet eval(double a, double b) const { return table(a, b).bijet(); }
};
using BiFieldPtr = std::shared_ptr<const BiField>;

// sum_i A_i(a) B_i(b)
BiFieldPtr separable(std::vector<std::pair<Jet3Curve, Jet3Curve>> terms);
BiFieldPtr separable_from_json(const nlohmann::json& j);
struct FieldPiece {
  double lo, hi;
  BiFieldPtr f;
};
BiFieldPtr piecewise_in_a(std::vector<FieldPiece> pieces);
// Degree 2k+1 Hermite spline in a on [c-w, c+w], fed per b by the endpoint
// a-jets of the two sources.
BiFieldPtr hermite_in_a(double c, double w, int k, BiFieldPtr left, BiFieldPtr right);

enum class ChartSide { left, right, glued };

// da^2 + mu(a)^2 db^2 + H(a,b)^2 ds_{fiber_dim}^2, region b <= phi(a)
struct CornerChart {
  double a_lo = -1, a_hi = 0, b_lo = -1, b_hi = 1;
  Jet3Curve mu;
  BiFieldPtr H;
  Jet3Curve phi;
  int fiber_dim = 2;
  ChartSide side = ChartSide::left;

  void validate() const;
  static CornerChart from_json(const nlohmann::json& j);
};

struct FaceSecondForm {
  double a = 0;
  double II_tau = 0, II_Z = 0;
  double tau_clear = 0, zed_clear = 0;
};

FaceSecondForm face_second_form(const CornerChart& chart, double a);
double face_profile_hessian(const CornerChart& chart, double a);
double dihedral_angle(const CornerChart& left, const CornerChart& right);
CornerChart glue_and_smooth(const CornerChart& left, const CornerChart& right, double eps, double delta);
PositivityCertificate convexity_certificate(const CornerChart& chart, const GridSpec& grid, double threshold = 1e-6);
PositivityCertificate concavity_certificate(const CornerChart& chart, const GridSpec& grid, double threshold = 1e-6);

void write_face_csv_header(std::ostream& os);
void write_face_csv_row(std::ostream& os, const FaceSecondForm& f, double profile_hessian);

}  // namespace wc
