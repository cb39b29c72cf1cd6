#include "wc/warped.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace wc {

namespace {
constexpr double kEndTol = 1e-9;

void check_closed(const Jet3& j, double sign, const char* name, const char* where) {
  if (std::abs(j.value) > kEndTol || std::abs(j.d1 - sign) > kEndTol || std::abs(j.d2) > kEndTol)
    throw PreconditionError(std::string(where) + " end closes " + name + " but " + name +
                            " does not satisfy value 0, slope " + (sign > 0 ? "+1" : "-1") +
                            ", second derivative 0");
}

void fill_ricci(CurvatureSample& c, int m, int n) {
  c.Ric_s = m * c.K_sk + (n - 1) * c.K_sh;
  c.Ric_k = c.K_sk + (m - 1) * c.K_kk + (n - 1) * c.K_kh;
  c.Ric_h = c.K_sh + (n - 2) * c.K_hh + m * c.K_kh;
}
}  // namespace

const char* to_string(EndKind k) {
  switch (k) {
    case EndKind::closed_k: return "closed_k";
    case EndKind::closed_h: return "closed_h";
    default: return "boundary";
  }
}

EndKind end_kind_from_string(const std::string& s) {
  if (s == "boundary") return EndKind::boundary;
  if (s == "closed_k") return EndKind::closed_k;
  if (s == "closed_h") return EndKind::closed_h;
  throw ParseError("unknown endpoint kind '" + s + "'");
}

DoublyWarpedMetric::DoublyWarpedMetric(Jet3Curve k_, Jet3Curve h_, int m_, int n_, EndKind left, EndKind right)
    : k(std::move(k_)), h(std::move(h_)), m(m_), n(n_), left_end(left), right_end(right) {
  if (m < 2 || n < 2) throw PreconditionError("warped metric needs m >= 2 and n >= 2");
  if (k.lo() != h.lo() || k.hi() != h.hi()) throw PreconditionError("k and h must share a domain");
  if (left == EndKind::closed_k) check_closed(k.eval(lo(), Side::right), 1, "k", "left");
  if (left == EndKind::closed_h) check_closed(h.eval(lo(), Side::right), 1, "h", "left");
  if (right == EndKind::closed_k) check_closed(k.eval(hi(), Side::left), -1, "k", "right");
  if (right == EndKind::closed_h) check_closed(h.eval(hi(), Side::left), -1, "h", "right");
  const auto flat = [](const Jet3& j, const char* where) {
    if (std::abs(j.d1) > kEndTol)
      throw PreconditionError(std::string("the non-collapsing factor must have zero slope at the closed ") + where +
                              " end");
  };
  if (left == EndKind::closed_k) flat(h.eval(lo(), Side::right), "left");
  if (left == EndKind::closed_h) flat(k.eval(lo(), Side::right), "left");
  if (right == EndKind::closed_k) flat(h.eval(hi(), Side::left), "right");
  if (right == EndKind::closed_h) flat(k.eval(hi(), Side::left), "right");
}

double CurvatureSample::min_ricci() const { return std::min({Ric_s, Ric_k, Ric_h}); }

CurvatureSample sectional(const DoublyWarpedMetric& g, double s) {
  const double len = g.hi() - g.lo();
  const double guard = g.guard * len;
  CurvatureSample c;
  c.s = s;
  EndKind end = EndKind::boundary;
  double at = s;
  Side side = Side::none;
  if (s - g.lo() < guard && g.left_end != EndKind::boundary) {
    end = g.left_end;
    at = g.lo();
    side = Side::right;
  } else if (g.hi() - s < guard && g.right_end != EndKind::boundary) {
    end = g.right_end;
    at = g.hi();
    side = Side::left;
  }
  if (end == EndKind::boundary) {
    const Jet3 k = g.k.eval_upto(s, 2), h = g.h.eval_upto(s, 2);
    if (!(k.value > 0) || !(h.value > 0))
      throw DomainError("nonpositive warping function at s=" + std::to_string(s));
    c.K_sk = -k.d2 / k.value;
    c.K_sh = -h.d2 / h.value;
    c.K_kk = (1 - k.d1 * k.d1) / (k.value * k.value);
    c.K_hh = (1 - h.d1 * h.d1) / (h.value * h.value);
    c.K_kh = -(k.d1 * h.d1) / (k.value * h.value);
  } else {
    // collapsing factor X with X' = +-1 at the end; the other factor Y stays positive
    const bool collapse_k = end == EndKind::closed_k;
    const Jet3 X = (collapse_k ? g.k : g.h).eval(at, side);
    const Jet3 Y = (collapse_k ? g.h : g.k).eval(at, side);
    if (!(Y.value > 0)) throw DomainError("nonpositive warping function at closed end");
    const double lim = -X.d1 * X.d3;
    const double ky = -Y.d2 / Y.value;
    const double yy = (1 - Y.d1 * Y.d1) / (Y.value * Y.value);
    // mixed term: -X'Y'/(XY) -> -X' Y''/Y since Y' vanishes with X
    const double mixed = -X.d1 * X.d1 * Y.d2 / Y.value;
    if (collapse_k) {
      c.K_sk = lim;
      c.K_kk = lim;
      c.K_sh = ky;
      c.K_hh = yy;
    } else {
      c.K_sh = lim;
      c.K_hh = lim;
      c.K_sk = ky;
      c.K_kk = yy;
    }
    c.K_kh = mixed;
  }
  fill_ricci(c, g.m, g.n);
  return c;
}

std::pair<double, double> level_set_second_form(const DoublyWarpedMetric& g, double s) {
  if (!(s > g.lo() && s < g.hi())) throw DomainError("level_set_second_form needs an interior point");
  const Jet3 k = g.k.eval_upto(s, 1), h = g.h.eval_upto(s, 1);
  if (!(k.value > 0) || !(h.value > 0)) throw DomainError("nonpositive warping function at s=" + std::to_string(s));
  return {k.d1 / k.value, h.d1 / h.value};
}

PositivityCertificate min_ricci(const DoublyWarpedMetric& g, const GridSpec& grid, double threshold) {
  return grid_min([&](std::span<const double> p) { return sectional(g, p[0]).min_ricci(); }, grid, threshold,
                  "min_ricci");
}

void write_curvature_csv_header(std::ostream& os) { os << "s,K_sk,K_sh,K_kk,K_hh,K_kh,Ric_s,Ric_k,Ric_h\n"; }

void write_curvature_csv_row(std::ostream& os, const CurvatureSample& c) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", c.s, c.K_sk, c.K_sh,
                c.K_kk, c.K_hh, c.K_kh, c.Ric_s, c.Ric_k, c.Ric_h);
  os << buf;
}

}  // namespace wc
