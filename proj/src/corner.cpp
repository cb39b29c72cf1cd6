#include "wc/corner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "wc/spline.hpp"

namespace wc {

using nlohmann::json;

namespace {

class Separable final : public BiField {
 public:
  explicit Separable(std::vector<std::pair<Jet3Curve, Jet3Curve>> t) : t_(std::move(t)) {}
  PartialTable table(double a, double b) const override {
    PartialTable out;
    for (const auto& [A, B] : t_) {
      const Jet3 ja = A.eval_upto(a, 2), jb = B.eval_upto(b, 2);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out.d[i][j] += ja[i] * jb[j];
    }
    return out;
  }

 private:
  std::vector<std::pair<Jet3Curve, Jet3Curve>> t_;
};

class Piecewise final : public BiField {
 public:
  explicit Piecewise(std::vector<FieldPiece> p) : p_(std::move(p)) {}
  PartialTable table(double a, double b) const override {
    for (const auto& p : p_)
      if (a >= p.lo && a < p.hi) return p.f->table(a, b);
    if (a == p_.back().hi) return p_.back().f->table(a, b);
    throw DomainError("a=" + std::to_string(a) + " outside field range");
  }

 private:
  std::vector<FieldPiece> p_;
};

class HermiteA final : public BiField {
 public:
  HermiteA(double c, double w, int k, BiFieldPtr l, BiFieldPtr r) : c_(c), w_(w), k_(k), l_(std::move(l)), r_(std::move(r)) {}
  PartialTable table(double a, double b) const override {
    const PartialTable L = l_->table(c_ - w_, b), R = r_->table(c_ + w_, b);
    PartialTable out;
    for (int j = 0; j < 4; ++j) {
      const double lj[3] = {L.d[0][j], L.d[1][j], L.d[2][j]}, rj[3] = {R.d[0][j], R.d[1][j], R.d[2][j]};
      const Jet3 p = ex::poly(hermite_coeffs(lj, rj, k_, w_))->eval(a - c_);
      for (int i = 0; i < 4; ++i) out.d[i][j] = p[i];
    }
    return out;
  }

 private:
  double c_, w_;
  int k_;
  BiFieldPtr l_, r_;
};

struct FaceJets {
  Jet3 mu, phi;
  PartialTable H;
  // h = H^2 and its partials
  double h, ha, hb, haa, hab, hbb;
};

FaceJets face_jets(const CornerChart& c, double a) {
  if (!(a >= c.a_lo && a <= c.a_hi)) throw DomainError("a=" + std::to_string(a) + " outside chart");
  FaceJets f;
  f.mu = c.mu.eval_upto(a, 1);
  f.phi = c.phi.eval_upto(a, 2);
  const double b = f.phi.value;
  if (!(b >= c.b_lo && b <= c.b_hi)) throw DomainError("face graph exits chart at a=" + std::to_string(a));
  f.H = c.H->table(a, b);
  const auto& d = f.H.d;
  if (!(d[0][0] > 0)) throw DomainError("H not positive at a=" + std::to_string(a));
  f.h = d[0][0] * d[0][0];
  f.ha = 2 * d[0][0] * d[1][0];
  f.hb = 2 * d[0][0] * d[0][1];
  f.haa = 2 * (d[1][0] * d[1][0] + d[0][0] * d[2][0]);
  f.hab = 2 * (d[1][0] * d[0][1] + d[0][0] * d[1][1]);
  f.hbb = 2 * (d[0][1] * d[0][1] + d[0][0] * d[0][2]);
  return f;
}

double slope_at_glue(const CornerChart& c) {
  return c.side == ChartSide::left ? c.phi.eval(0, Side::left).d1 : c.phi.eval(0, Side::right).d1;
}

Jet3Curve join(const Jet3Curve& l, const Jet3Curve& r) {
  std::vector<Jet3Curve::Piece> ps = l.pieces();
  std::vector<int> ord = l.orders();
  ord.push_back(jet_mismatch_order(l.eval(0, Side::left), r.eval(0, Side::right)));
  ps.insert(ps.end(), r.pieces().begin(), r.pieces().end());
  ord.insert(ord.end(), r.orders().begin(), r.orders().end());
  return Jet3Curve(std::move(ps), std::move(ord));
}

std::vector<double> b_samples(double lo, double hi) {
  std::vector<double> out;
  for (int i = 0; i <= 32; ++i) out.push_back(lo + (hi - lo) * i / 32);
  return out;
}

}  // namespace

BiFieldPtr separable(std::vector<std::pair<Jet3Curve, Jet3Curve>> terms) {
  if (terms.empty()) throw PreconditionError("separable field needs at least one term");
  return std::make_shared<Separable>(std::move(terms));
}

BiFieldPtr separable_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("H must be a list of {a, b} terms");
  std::vector<std::pair<Jet3Curve, Jet3Curve>> t;
  for (const auto& e : j) {
    for (const auto& [k, _] : e.items())
      if (k != "a" && k != "b") throw ParseError("H term: unknown key '" + k + "'");
    if (!e.contains("a") || !e.contains("b")) throw ParseError("H term needs 'a' and 'b'");
    t.emplace_back(Jet3Curve::from_json(e.at("a")), Jet3Curve::from_json(e.at("b")));
  }
  return separable(std::move(t));
}

BiFieldPtr piecewise_in_a(std::vector<FieldPiece> pieces) {
  if (pieces.empty()) throw PreconditionError("piecewise field needs pieces");
  return std::make_shared<Piecewise>(std::move(pieces));
}

BiFieldPtr hermite_in_a(double c, double w, int k, BiFieldPtr left, BiFieldPtr right) {
  if (!(w > 0)) throw PreconditionError("spline half width must be positive");
  return std::make_shared<HermiteA>(c, w, k, std::move(left), std::move(right));
}

void CornerChart::validate() const {
  if (!(a_lo < a_hi) || !(b_lo < b_hi)) throw PreconditionError("chart ranges must be nonempty");
  if (mu.lo() != a_lo || mu.hi() != a_hi || phi.lo() != a_lo || phi.hi() != a_hi)
    throw PreconditionError("mu and phi domains must equal the chart's a-range");
  if (fiber_dim < 2) throw PreconditionError("fiber dimension must be >= 2");
  if (side == ChartSide::left && a_hi != 0) throw PreconditionError("left chart must end at a=0");
  if (side == ChartSide::right && a_lo != 0) throw PreconditionError("right chart must start at a=0");
  if (side != ChartSide::glued) {
    if (std::abs(mu(0) - 1) > 1e-12) throw PreconditionError("chart normalization mu(0)=1 violated");
    if (std::abs(phi(0)) > 1e-12) throw PreconditionError("chart normalization phi(0)=0 violated");
  }
  for (int i = 0; i <= 16; ++i)
    for (double b : b_samples(b_lo, b_hi)) {
      const double a = a_lo + (a_hi - a_lo) * i / 16;
      if (!(H->table(a, b).d[0][0] > 0)) throw PreconditionError("H must be positive on the chart");
      if (!(mu(a) > 0)) throw PreconditionError("mu must be positive on the chart");
    }
}

CornerChart CornerChart::from_json(const json& j) {
  static const char* keys[] = {"a_range", "b_range", "mu", "phi", "H", "fiber_dim", "side"};
  for (const auto& [k, _] : j.items())
    if (std::find(std::begin(keys), std::end(keys), k) == std::end(keys))
      throw ParseError("chart: unknown key '" + k + "'");
  for (const char* k : keys)
    if (!j.contains(k)) throw ParseError(std::string("chart: missing '") + k + "'");
  CornerChart c;
  try {
    const auto ar = j.at("a_range").get<std::vector<double>>(), br = j.at("b_range").get<std::vector<double>>();
    if (ar.size() != 2 || br.size() != 2) throw ParseError("chart ranges expect [lo, hi]");
    c.a_lo = ar[0], c.a_hi = ar[1], c.b_lo = br[0], c.b_hi = br[1];
    c.fiber_dim = j.at("fiber_dim").get<int>();
    const auto side = j.at("side").get<std::string>();
    if (side != "left" && side != "right") throw ParseError("chart side must be left or right");
    c.side = side == "left" ? ChartSide::left : ChartSide::right;
  } catch (const json::exception& e) {
    throw ParseError(std::string("chart: ") + e.what());
  }
  c.mu = Jet3Curve::from_json(j.at("mu"));
  c.phi = Jet3Curve::from_json(j.at("phi"));
  c.H = separable_from_json(j.at("H"));
  return c;
}

FaceSecondForm face_second_form(const CornerChart& c, double a) {
  const FaceJets f = face_jets(c, a);
  const double mu = f.mu.value, mua = f.mu.d1, pa = f.phi.d1, paa = f.phi.d2;
  const double q = 1 + mu * mu * pa * pa, sq = std::sqrt(q);
  FaceSecondForm out;
  out.a = a;
  out.tau_clear = -mu * paa - pa * mua * (mu * mu * pa * pa + 2);
  out.zed_clear = -pa * f.ha * mu * mu + f.hb;
  out.II_tau = out.tau_clear / (q * sq);
  out.II_Z = out.zed_clear / (2 * mu * f.h * sq);
  return out;
}

double face_profile_hessian(const CornerChart& c, double a) {
  const FaceJets f = face_jets(c, a);
  const double mu = f.mu.value, mua = f.mu.d1, pa = f.phi.d1, paa = f.phi.d2;
  const double dpsi = std::sqrt(1 + mu * mu * pa * pa);
  const double ddpsi = (mu * mua * pa * pa + mu * mu * pa * paa) / dpsi;
  const double a1 = 1 / dpsi, a2 = -ddpsi / (dpsi * dpsi * dpsi);
  const double b1 = pa * a1, b2 = paa * a1 * a1 + pa * a2;
  return f.ha * a2 + f.hb * b2 + f.haa * a1 * a1 + 2 * f.hab * a1 * b1 + f.hbb * b1 * b1;
}

double dihedral_angle(const CornerChart& left, const CornerChart& right) {
  return std::numbers::pi - std::atan(slope_at_glue(left)) + std::atan(slope_at_glue(right));
}

CornerChart glue_and_smooth(const CornerChart& L, const CornerChart& R, double eps, double delta) {
  if (L.side != ChartSide::left || R.side != ChartSide::right)
    throw PreconditionError("glue_and_smooth expects a left chart and a right chart");
  L.validate();
  R.validate();
  if (L.fiber_dim != R.fiber_dim) throw PreconditionError("fiber dimensions differ");
  if (!(eps > 0 && delta > 0 && delta < eps)) throw PreconditionError("need 0 < delta < eps");
  if (!(eps + delta < -L.a_lo && eps + delta < R.a_hi)) throw PreconditionError("smoothing window exits the charts");

  const bool aligned = jet_mismatch_order(L.phi.eval(0, Side::left), R.phi.eval(0, Side::right), 1e-12) >= 3;
  const double angle = dihedral_angle(L, R);
  if (!aligned && !(angle < std::numbers::pi))
    throw PreconditionError("interior dihedral angle " + std::to_string(angle) + " is not less than pi");

  CornerChart out;
  out.b_lo = std::max(L.b_lo, R.b_lo);
  out.b_hi = std::min(L.b_hi, R.b_hi);
  if (!(out.b_lo < out.b_hi)) throw PreconditionError("charts share no b-range");
  const double dmu = L.mu.eval(0, Side::left).d1 - R.mu.eval(0, Side::right).d1;
  if (!(dmu > 0)) throw PreconditionError("glue face second-form sum not positive: mu_a jump " + std::to_string(dmu));
  for (double b : b_samples(out.b_lo, out.b_hi)) {
    const PartialTable tl = L.H->table(0, b), tr = R.H->table(0, b);
    const double hl = tl.d[0][0], hr = tr.d[0][0];
    if (std::abs(hl - hr) > 1e-9 * (1 + std::abs(hl)))
      throw PreconditionError("boundary metrics differ at b=" + std::to_string(b));
    const double jump = 2 * hl * tl.d[1][0] - 2 * hr * tr.d[1][0];
    if (!(jump > 0))
      throw PreconditionError("glue face second-form sum not positive at b=" + std::to_string(b));
  }

  out.a_lo = L.a_lo;
  out.a_hi = R.a_hi;
  out.fiber_dim = L.fiber_dim;
  out.side = ChartSide::glued;
  out.mu = two_stage_smooth(join(L.mu, R.mu), 0, eps, delta);
  const Jet3Curve phi = join(L.phi, R.phi);
  out.phi = aligned ? phi : two_stage_smooth(phi, 0, eps, delta);

  const BiFieldPtr cubic = hermite_in_a(0, eps, 1, L.H, R.H);
  const BiFieldPtr q1 = hermite_in_a(-eps, delta, 2, L.H, cubic), q2 = hermite_in_a(eps, delta, 2, cubic, R.H);
  out.H = piecewise_in_a({{L.a_lo, -eps - delta, L.H},
                          {-eps - delta, -eps + delta, q1},
                          {-eps + delta, eps - delta, cubic},
                          {eps - delta, eps + delta, q2},
                          {eps + delta, R.a_hi, R.H}});
  return out;
}

PositivityCertificate convexity_certificate(const CornerChart& c, const GridSpec& grid, double threshold) {
  return grid_min(
      [&](std::span<const double> p) {
        const auto f = face_second_form(c, p[0]);
        return std::min(f.tau_clear, f.zed_clear);
      },
      grid, threshold, "face_convexity");
}

PositivityCertificate concavity_certificate(const CornerChart& c, const GridSpec& grid, double threshold) {
  return grid_min([&](std::span<const double> p) { return -face_profile_hessian(c, p[0]); }, grid, threshold,
                  "profile_concavity");
}

void write_face_csv_header(std::ostream& os) { os << "a,II_tau,II_Z,tau_clear,zed_clear,profile_hessian\n"; }

void write_face_csv_row(std::ostream& os, const FaceSecondForm& f, double ph) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", f.a, f.II_tau, f.II_Z, f.tau_clear,
                f.zed_clear, ph);
  os << buf;
}

}  // namespace wc
