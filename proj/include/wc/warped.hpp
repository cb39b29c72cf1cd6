#pragma once

#include <ostream>
#include <utility>

#include "wc/jet.hpp"
#include "wc/verify.hpp"

namespace wc {

enum class EndKind { boundary, closed_k, closed_h };

const char* to_string(EndKind k);
EndKind end_kind_from_string(const std::string& s);

// ds^2 + k(s)^2 ds_m^2 + h(s)^2 ds_{n-1}^2
struct DoublyWarpedMetric {
  Jet3Curve k, h;
  int m = 2, n = 2;
  EndKind left_end = EndKind::boundary, right_end = EndKind::boundary;
  double guard = 1e-6;  // fraction of the domain length

  DoublyWarpedMetric(Jet3Curve k, Jet3Curve h, int m, int n, EndKind left = EndKind::boundary,
                     EndKind right = EndKind::boundary);
  double lo() const { return k.lo(); }
  double hi() const { return k.hi(); }
};

struct CurvatureSample {
  double s = 0;
  double K_sk = 0, K_sh = 0, K_kk = 0, K_hh = 0, K_kh = 0;
  double Ric_s = 0, Ric_k = 0, Ric_h = 0;

  double min_ricci() const;
};

CurvatureSample sectional(const DoublyWarpedMetric& g, double s);
// Principal curvatures of the level set {s} w.r.t. +d/ds: (k'/k, h'/h).
std::pair<double, double> level_set_second_form(const DoublyWarpedMetric& g, double s);
PositivityCertificate min_ricci(const DoublyWarpedMetric& g, const GridSpec& grid, double threshold = 1e-6);

void write_curvature_csv_header(std::ostream& os);
void write_curvature_csv_row(std::ostream& os, const CurvatureSample& c);

}  // namespace wc
