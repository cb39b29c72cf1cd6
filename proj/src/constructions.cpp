#include "wc/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/tools/roots.hpp>

#include "wc/spline.hpp"

namespace wc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kJetTol = 1e-9;

Condition cond(std::string id, double margin, double tol) { return {std::move(id), margin, margin > tol}; }

double scan_min(const std::function<double(double)>& f, double lo, double hi, int count = 1025) {
  return grid_min([&](std::span<const double> p) { return f(p[0]); }, GridSpec::line(lo, hi, count, 2), 0.0)
      .min_margin;
}

double scan_max(const std::function<double(double)>& f, double lo, double hi, int count = 1025) {
  return -scan_min([&](double s) { return -f(s); }, lo, hi, count);
}

// Jet through order 3; one-sided at breakpoints where the third derivative jumps.
Jet3 jet3(const Jet3Curve& f, double s) {
  if (f.continuity_at(s) <= 3) return f.eval(s, s == f.lo() ? Side::right : Side::left);
  return f.eval_upto(s, 3);
}

// -f''/f with the limit f'''/f' where f vanishes.
double neg_curv_ratio(const Jet3Curve& f, double s) {
  const Jet3 j = jet3(f, s);
  if (std::abs(j.value) < 1e-12 * (1 + std::abs(j.d1))) return -j.d3 / j.d1;
  return -j.d2 / j.value;
}

// Knee on [T - L, T]: -k' = tau + (1 - tau) Q(x), x = (T - s) / L, with
// Q = (1 - theta) S(x^(2j)) + theta (1 - x^2), S(z) = 1 - 3z^2 + 2z^3.
// k(T) = 0, k'(T) = -1, and -k'' = 2 theta (1 - tau) / L at the joint.
double knee_area(int j, double theta) {
  return (1 - theta) * (1 - 3.0 / (4 * j + 1) + 2.0 / (6 * j + 1)) + 2 * theta / 3;
}

// Coefficients in y = s - T.
std::vector<double> knee_poly(double tau, double theta, int j, double L) {
  std::vector<double> c(6 * j + 2, 0.0);
  c[1] = -1;
  c[3] += (1 - tau) * theta / (3 * L * L);
  c[4 * j + 1] += (1 - tau) * (1 - theta) * 3 / ((4 * j + 1) * std::pow(L, 4 * j));
  c[6 * j + 1] += -(1 - tau) * (1 - theta) * 2 / ((6 * j + 1) * std::pow(L, 6 * j));
  return c;
}

struct Knee {
  double s = 0, tau = 0, theta = 0;
  int j = 0;
  Expr f;
};

// Joins a concave band (value, slope, second derivative at s) to a knee ending at T,
// with the joint s in [s_lo, s_hi] chosen so the two are C2 there.
Knee fit_knee(const std::function<Jet3(double)>& band, double T, double s_lo, double s_hi, const char* what) {
  const auto params = [&](double s) {
    const Jet3 b = band(s);
    const double tau = -b.d1, L = T - s;
    const double theta = -b.d2 * L / (2 * (1 - tau));
    return std::array<double, 3>{tau, theta, L};
  };
  const auto gap = [&](int j, double s) {
    const auto [tau, theta, L] = params(s);
    return L * (tau + (1 - tau) * knee_area(j, theta)) - band(s).value;
  };
  int j = 1;
  while (j <= 400 && gap(j, s_lo) < 0) ++j;
  if (j > 400) throw PreconditionError(std::string(what) + ": knee infeasible, band value too large for the interval");
  if (!(gap(j, s_hi) < 0)) throw PreconditionError(std::string(what) + ": knee bracket failed");
  double a = s_lo, b = s_hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    (gap(j, mid) >= 0 ? a : b) = mid;
  }
  const auto [tau, theta, L] = params(a);
  if (!(tau < 1 && theta > 0 && theta < 1))
    throw PreconditionError(std::string(what) + ": knee parameters out of range");
  return {a, tau, theta, j, ex::poly(knee_poly(tau, theta, j, L), T)};
}

Jet3Curve curve_from(std::vector<Jet3Curve::Piece> ps) {
  std::vector<int> ord;
  for (size_t i = 0; i + 1 < ps.size(); ++i)
    ord.push_back(jet_mismatch_order(ps[i].f->eval(ps[i].hi), ps[i + 1].f->eval(ps[i].hi)));
  return Jet3Curve(std::move(ps), std::move(ord));
}

}  // namespace

nlohmann::json to_json(const std::vector<Condition>& cs) {
  auto a = nlohmann::json::array();
  for (const auto& c : cs) a.push_back({{"id", c.id}, {"margin", c.margin}, {"passed", c.passed}});
  return a;
}

bool all_passed(const std::vector<Condition>& cs) {
  return std::all_of(cs.begin(), cs.end(), [](const Condition& c) { return c.passed; });
}

void require_all(const std::vector<Condition>& cs, const std::string& what) {
  std::string bad;
  for (const auto& c : cs)
    if (!c.passed) bad += (bad.empty() ? "" : ", ") + c.id + " (margin " + std::to_string(c.margin) + ")";
  if (!bad.empty()) throw PreconditionError(what + ": failed conditions " + bad);
}

// ---------------------------------------------------------------- handle

double HandleParams::glue_point() const { return kPi * R / 3; }

std::vector<double> HandleParams::shape_coeffs() const {
  if (shape == "quartic") return {0, 0, 0, 0, 1};
  if (shape == "concave_end") return {0, 0, 3, 0, -1};
  throw PreconditionError("handle: unknown f_nu shape '" + shape + "'");
}

double HandleParams::effective_gain() const {
  if (gain > 0) return gain;
  const auto q = shape_coeffs();
  return 2 * glue_point() / (2 * q[2] + 4 * q[4]);
}

Jet3Curve HandleParams::fnu() const {
  const double Tg = glue_point(), g = effective_gain();
  const auto q = shape_coeffs();
  std::vector<double> c(5, 0.0);
  c[0] = 1;
  for (int i = 1; i < 5; ++i) c[i] = nu * g * q[i] / std::pow(Tg, i);
  return Jet3Curve(ex::poly(c), 0, Tg);
}

void HandleParams::validate() const {
  if (!(R > 1)) throw PreconditionError("handle: R must exceed 1");
  if (!(nu >= 0 && nu < 1)) throw PreconditionError("handle: nu must lie in [0, 1)");
  if (m < 2 || n < 2) throw PreconditionError("handle: m and n must be at least 2");
  if (gain < 0) throw PreconditionError("handle: gain must be nonnegative");
  const auto q = shape_coeffs();
  const double slope = nu * effective_gain() * (2 * q[2] + 4 * q[4]) / glue_point();
  if (nu > 0 && !(slope > nu)) throw PreconditionError("handle: f_nu'(pi R/3) must exceed nu; raise gain");
}

DoublyWarpedMetric make_handle(const HandleParams& p) {
  p.validate();
  const double Tg = p.glue_point();
  Jet3Curve h(ex::sin(2 * p.R, 1 / (2 * p.R), 0), 0, Tg);
  return DoublyWarpedMetric(p.fnu(), h, p.m, p.n, EndKind::closed_h, EndKind::boundary);
}

// ---------------------------------------------------------------- esphere

HandleParams EsphereParams::handle() const { return {R, nu, m, n, gain, shape}; }

double EsphereParams::dock_length() const {
  if (dock > 0) return dock;
  const HandleParams hp = handle();
  const auto q = hp.shape_coeffs();
  const double top = std::cos(b1) * (1 + nu * hp.effective_gain() * (q[2] + q[4]));
  return std::max(kPi * R / 6, eps_h() + delta_h() + 1.2 * top);
}

double EsphereParams::eps_h() const { return eps > 0 ? eps : 0.175 * R; }
double EsphereParams::delta_h() const { return delta > 0 ? delta : eps_h() / 8; }
double EsphereParams::eps_k_() const { return eps_k > 0 ? eps_k : 0.025 * R; }
double EsphereParams::delta_k_() const { return delta_k > 0 ? delta_k : eps_k_() / 5; }

void EsphereParams::validate() const {
  if (!(R > 1)) throw PreconditionError("esphere: R must exceed 1");
  if (!(nu > 0 && nu < 1)) throw PreconditionError("esphere: nu must lie in (0, 1)");
  if (!(b1 > 0 && b1 < kPi / 2)) throw PreconditionError("esphere: b1 must lie in (0, pi/2)");
  if (m < 2 || n < 2) throw PreconditionError("esphere: m and n must be at least 2");
  if (eps < 0 || delta < 0 || eps_k < 0 || delta_k < 0) throw PreconditionError("esphere: widths must be positive");
  if (!(delta_h() < eps_h()) || !(delta_k_() < eps_k_())) throw PreconditionError("esphere: need 0 < delta < eps");
  if (dock < 0) throw PreconditionError("esphere: dock length must be positive");
  if (!(eps_h() + delta_h() < dock_length())) throw PreconditionError("esphere: smoothing windows exceed the docking length");
  if (!(eps_k_() + delta_k_() < eps_h() + delta_h()))
    throw PreconditionError("esphere: the k window must lie inside the h window");
  if (!(close_tol > 0) || !(tol >= 0)) throw PreconditionError("esphere: tolerances must be positive");
  if (!(kappa > 0)) throw PreconditionError("esphere: kappa must be positive");
  handle().validate();
}

DoublyWarpedMetric EsphereProfile::metric() const {
  return DoublyWarpedMetric(k, h, params.m, params.n, EndKind::closed_h, EndKind::closed_k);
}

std::vector<Condition> check_esphere(const EsphereProfile& p) {
  const double R = p.params.R, tol = p.params.tol, T = p.T;
  const double c = std::cos(p.params.b1);
  const HandleParams hp = p.params.handle();
  const auto q = hp.shape_coeffs();
  const double qmax = q[2] + q[4];
  std::vector<Condition> cs;
  cs.push_back(cond("breakpoints_ordered", std::min({p.T0, p.T1 - p.T0, p.T2 - p.T1, p.T3 - p.T2, T - p.T3}), 0));
  {
    const Jet3 j = p.k.eval(0, Side::right);
    cs.push_back(cond("k_odd_derivatives_at_0", kJetTol - std::max(std::abs(j.d1), std::abs(j.d3)), 0));
  }
  cs.push_back(cond("k_near_base_before_T0", p.params.nu * hp.effective_gain() * qmax * c -
                                                 scan_max([&](double s) { return std::abs(p.k(s) - c); }, 0, p.T0),
                    tol));
  cs.push_back(cond("k_concave_after_T1", scan_min([&](double s) {
                      const Jet3 j = jet3(p.k, s);
                      return T - s < 1e-12 * T ? j.d3 : -j.d2 / (T - s);
                    }, p.T1, T, 4097), tol));
  {
    const Jet3 j = p.k.eval(T, Side::left);
    cs.push_back(cond("k_end_slope_minus_one",
                      kJetTol - std::max({std::abs(j.value), std::abs(j.d1 + 1), std::abs(j.d2)}), 0));
  }
  cs.push_back(cond("k_positive", scan_min([&](double s) {
                      return T - s < 1e-12 * T ? -p.k.eval_upto(s, 1).d1 : p.k(s) / (T - s);
                    }, 0, T), tol));
  {
    const Jet3 j = p.h.eval(0, Side::right);
    cs.push_back(cond("h_even_derivatives_at_0",
                      kJetTol - std::max({std::abs(j.value), std::abs(j.d1 - 1), std::abs(j.d2)}), 0));
  }
  cs.push_back(cond("h_curvature_before_T1",
                    scan_min([&](double s) { return neg_curv_ratio(p.h, s); }, 0, p.T1) - 1 / (5 * R * R), tol));
  cs.push_back(cond("h_concave_before_T2",
                    scan_min([&](double s) { return neg_curv_ratio(p.h, s); }, 0, p.T2, 4097), tol));
  cs.push_back(cond("h_close_to_R_after_T2",
                    p.params.close_tol * R - scan_max([&](double s) { return std::abs(p.h(s) - R); }, p.T2, T), 0));
  cs.push_back(cond("h_equals_R_after_T3",
                    1e-12 * R - scan_max([&](double s) { return std::abs(p.h(s) - R); }, p.T3, T), 0));
  return cs;
}

EsphereProfile make_esphere_profile(const EsphereParams& in) {
  in.validate();
  EsphereProfile p;
  p.params = in;
  const double R = in.R, nu = in.nu, c = std::cos(in.b1);
  p.eps = in.eps_h();
  p.delta = in.delta_h();
  p.eps_k = in.eps_k_();
  p.delta_k = in.delta_k_();
  p.glue = kPi * R / 3;
  p.T = p.glue + in.dock_length();
  const double Tg = p.glue, e = p.eps, d = p.delta;

  const Jet3Curve kH = in.handle().fnu();
  const Jet3 at_glue = kH.eval(Tg, Side::left);
  p.sigma = c * nu / 2;
  p.kappa = in.kappa * c * nu;
  const double V = c * at_glue.value, sigma = p.sigma, kappa = p.kappa;
  const Expr band = ex::poly({V, sigma, -kappa / 2}, Tg);
  const double s_lo = Tg + 2 * (p.eps_k + p.delta_k), s_hi = p.T - 0.05 * (p.T - Tg);
  const Knee knee = fit_knee([&](double s) {
    const double y = s - Tg;
    return Jet3{V + sigma * y - kappa * y * y / 2, sigma - kappa * y, -kappa, 0};
  }, p.T, s_lo, s_hi, "esphere docking");
  p.s_dock = knee.s;
  p.knee_j = knee.j;
  p.knee_theta = knee.theta;

  std::vector<Jet3Curve::Piece> kp;
  for (const auto& pc : kH.pieces()) kp.push_back({pc.lo, pc.hi, ex::scale(c, pc.f)});
  kp.push_back({Tg, knee.s, band});
  kp.push_back({knee.s, p.T, knee.f});
  const Jet3Curve k_raw = curve_from(std::move(kp));
  const Jet3Curve h_raw({{0, Tg, ex::sin(2 * R, 1 / (2 * R), 0)}, {Tg, p.T, ex::constant(R)}}, {1});
  p.k = two_stage_smooth(k_raw, Tg, p.eps_k, p.delta_k);
  p.h = two_stage_smooth(h_raw, Tg, e, d);
  p.T0 = Tg - e - d;
  p.T2 = Tg + e + d / 4;
  p.T3 = Tg + e + d;
  // T1 sits halfway to where -h''/h first comes within 5% of 1/(5R^2).
  const double floor = 1.05 / (5 * R * R);
  double first = p.T0 + 2 * d;
  for (int i = 1; i <= 2000; ++i) {
    const double s = p.T0 + 2 * d * i / 2000;
    if (neg_curv_ratio(p.h, s) < floor) {
      first = s;
      break;
    }
  }
  p.T1 = p.T0 + 0.5 * (first - p.T0);
  p.conditions = check_esphere(p);
  require_all(p.conditions, "esphere profile");
  return p;
}

// ---------------------------------------------------------------- stage-1 target

std::vector<Condition> check_kandh(const EsphereProfile& p, const Jet3Curve& k1, const Jet3Curve& h1) {
  const double T = p.T, R = p.params.R, tol = p.params.tol;
  const double bound = p.params.nu * std::cos(p.params.b1);
  std::vector<Condition> cs;
  {
    const Jet3 a = k1.eval(0, Side::right), b = k1.eval(T, Side::left);
    cs.push_back(cond("k1_odd_derivatives_at_0", kJetTol - std::max(std::abs(a.d1), std::abs(a.d3)), 0));
    cs.push_back(cond("k1_even_derivatives_at_T", kJetTol - std::max(std::abs(b.value), std::abs(b.d2)), 0));
    cs.push_back(cond("k1_end_slope_minus_one", kJetTol - std::abs(b.d1 + 1), 0));
  }
  cs.push_back(cond("k1_matches_k0_at_T1", kJetTol - std::abs(k1(p.T1) - p.k(p.T1)), 0));
  cs.push_back(cond("k1_concave", scan_min([&](double s) {
                      const Jet3 j = jet3(k1, s);
                      return T - s < 1e-12 * T ? j.d3 : -j.d2 / (T - s);
                    }, 0, T), tol));
  cs.push_back(cond("k1_slope_band_before_T2", scan_min([&](double s) {
                      const Jet3 j = k1.eval_upto(s, 2);
                      const double lower = j.d1 + bound;
                      const double upper = s < 1e-12 ? -j.d2 : -j.d1 / s;
                      return std::min(lower, upper);
                    }, 0, p.T2), tol));
  cs.push_back(cond("h1_equals_h0_before_T0",
                    1e-12 * R - scan_max([&](double s) { return std::abs(h1(s) - p.h(s)); }, 0, p.T0), 0));
  cs.push_back(cond("h1_equals_R_after_T3",
                    1e-12 * R - scan_max([&](double s) { return std::abs(h1(s) - R); }, p.T3, T), 0));
  cs.push_back(cond("h1_concave_before_T3", scan_min([&](double s) {
                      if (s <= p.T0) return neg_curv_ratio(h1, s);
                      const Jet3 j = jet3(h1, s);
                      return p.T3 - s < 1e-12 * T ? j.d3 / j.value : -j.d2 / (j.value * (p.T3 - s));
                    }, 0, p.T3), tol));
  cs.push_back(cond("h1_close_to_h0",
                    p.eps - scan_max([&](double s) { return std::abs(h1(s) - p.h(s)); }, 0, T), 0));
  return cs;
}

KandHTarget make_kandh_target(const EsphereProfile& p) {
  KandHTarget out;
  const double T = p.T, T1 = p.T1, T2 = p.T2, R = p.params.R;
  const double tau = p.params.nu * std::cos(p.params.b1) / 2;
  const double target = p.k(T1);
  const double s_lo = T2 + 0.05 * (T - T2), s_hi = T - 0.05 * (T - T2);
  const auto theta_of = [&](double sk) { return tau * (T - sk) / (2 * (1 - tau) * sk); };
  const auto value_at_T1 = [&](int j, double sk) {
    const double Lk = T - sk, th = theta_of(sk);
    return Lk * (tau + (1 - tau) * knee_area(j, th)) + tau * (sk * sk - T1 * T1) / (2 * sk);
  };
  int j = 1;
  while (j <= 400 && value_at_T1(j, s_lo) < target) ++j;
  if (j > 400) throw PreconditionError("stage-1 target infeasible: k0(T1) too large for the docking interval");
  if (!(value_at_T1(j, s_hi) < target)) throw PreconditionError("stage-1 target: knee bracket failed");
  double a = s_lo, b = s_hi;
  for (int it = 0; it < 200 && b - a > 0; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    (value_at_T1(j, mid) >= target ? a : b) = mid;
  }
  const double sk = a, Lk = T - sk, th = theta_of(sk);
  const double C0 = Lk * (tau + (1 - tau) * knee_area(j, th)) + tau * sk / 2;
  out.k1 = curve_from(
      {{0, sk, ex::poly({C0, 0, -tau / (2 * sk)})}, {sk, T, ex::poly(knee_poly(tau, th, j, Lk), T)}});
  out.tau = tau;
  out.s_k = sk;
  out.theta = th;
  out.j = j;

  const Jet3 left = p.h.eval(p.T0, Side::left);
  const double w = (p.T3 - p.T0) / 2;
  const Expr head = p.h.pieces().front().f;
  std::vector<Condition> best;
  for (int i = -4; i <= 16; ++i) {
    const double gamma = left.d1 / (w * w) * std::ldexp(1.0, i);
    auto seg = hermite_septic(left, Jet3{R, 0, 0, gamma}, w);
    seg.center = p.T0 + w;
    Jet3Curve h1({{0, p.T0, head}, {p.T0, p.T3, seg.to_expr()}, {p.T3, T, ex::constant(R)}},
                 {jet_mismatch_order(head->eval(p.T0), seg.to_expr()->eval(p.T0)), 3});
    auto cs = check_kandh(p, out.k1, h1);
    if (all_passed(cs) || i == 16) {
      out.h1 = std::move(h1);
      out.gamma = gamma;
      best = std::move(cs);
      break;
    }
  }
  out.conditions = std::move(best);
  require_all(out.conditions, "stage-1 target");
  return out;
}

// ---------------------------------------------------------------- paths

MetricPath MetricPath::round_radius(int dim, Jet3Curve r) {
  if (dim < 2) throw PreconditionError("round path needs dimension at least 2");
  if (r.lo() != 0 || r.hi() != 1) throw PreconditionError("round path radius must be defined on [0, 1]");
  for (const auto& k : r.kinks())
    if (k.order < 2) throw PreconditionError("round path radius must be C1 in s");
  MetricPath p;
  p.kind_ = Kind::round_radius;
  p.dim_ = dim;
  p.r_ = std::move(r);
  const double rmin = scan_min([&](double s) { return p.r_(s); }, 0, 1, 257);
  if (!(rmin > 0)) throw PreconditionError("round path radius must stay positive");
  return p;
}

MetricPath MetricPath::warped_affine(DoublyWarpedMetric a, DoublyWarpedMetric b, double lam0, double lam1) {
  if (!(lam0 < lam1)) throw PreconditionError("path parameter range must be increasing");
  if (a.m != b.m || a.n != b.n) throw PreconditionError("path endpoints must share fiber dimensions");
  if (a.lo() != b.lo() || a.hi() != b.hi()) throw PreconditionError("path endpoints must share a domain");
  if (a.left_end != b.left_end || a.right_end != b.right_end)
    throw PreconditionError("path endpoints must close the same factors");
  MetricPath p;
  p.kind_ = Kind::warped_affine;
  p.dim_ = a.m + a.n;
  p.a_ = std::move(a);
  p.b_ = std::move(b);
  p.lam0_ = lam0;
  p.lam1_ = lam1;
  return p;
}

int MetricPath::dimension() const { return dim_; }

DoublyWarpedMetric MetricPath::at(double lambda) const {
  if (kind_ != Kind::warped_affine) throw PreconditionError("round path has no doubly warped representation");
  if (!(lambda >= lam0_ && lambda <= lam1_)) throw DomainError("path parameter outside range");
  const double w = (lambda - lam0_) / (lam1_ - lam0_);
  return DoublyWarpedMetric(affine_combine(a_->k, b_->k, w), affine_combine(a_->h, b_->h, w), a_->m, a_->n,
                            a_->left_end, a_->right_end);
}

PositivityCertificate MetricPath::min_ricci(const GridSpec& grid, double threshold) const {
  if (kind_ == Kind::round_radius) {
    if (grid.axes.size() != 1) throw PreconditionError("round path Ricci grid must be one-dimensional");
    return grid_min([&](std::span<const double> p) {
      const double r = r_(p[0]);
      return (dim_ - 1) / (r * r);
    }, grid, threshold, "path_min_ricci");
  }
  if (grid.axes.size() != 2) throw PreconditionError("warped path Ricci grid must be (lambda, s)");
  return grid_min([&](std::span<const double> p) { return sectional(at(p[0]), p[1]).min_ricci(); }, grid, threshold,
                  "path_min_ricci");
}

MetricPath isotopy_stage1(const EsphereProfile& p, const KandHTarget& target) {
  require_all(target.conditions, "stage-1 target");
  DoublyWarpedMetric end(target.k1, target.h1, p.params.m, p.params.n, EndKind::closed_h, EndKind::closed_k);
  return MetricPath::warped_affine(p.metric(), std::move(end), 0, 1);
}

MetricPath round_path(double R, int m, int n) {
  const double T = kPi * R / 2;
  return MetricPath::warped_affine(
      DoublyWarpedMetric(Jet3Curve(ex::cos(R, 1 / R, 0), 0, T), Jet3Curve(ex::sin(R, 1 / R, 0), 0, T), m, n,
                         EndKind::closed_h, EndKind::closed_k),
      DoublyWarpedMetric(Jet3Curve(ex::cos(R, 1 / R, 0), 0, T), Jet3Curve(ex::sin(R, 1 / R, 0), 0, T), m, n,
                         EndKind::closed_h, EndKind::closed_k),
      0, 1);
}

MetricPath isotopy_stage2(const Jet3Curve& k1, const Jet3Curve& h1, int m, int n) {
  if (k1.lo() != 0 || h1.lo() != 0 || k1.hi() != h1.hi()) throw PreconditionError("stage 2 needs k1, h1 on a common [0, T]");
  const double R = 2 * k1.hi() / kPi;
  const double kk = scan_max([&](double s) { return k1.eval_upto(s, 2).d2; }, 0, k1.hi(), 2049);
  const double hh = scan_max([&](double s) { return h1.eval_upto(s, 2).d2; }, 0, h1.hi(), 2049);
  if (kk > 1e-12) throw PreconditionError("stage 2 needs k1'' <= 0 (max " + std::to_string(kk) + ")");
  if (hh > 1e-12) throw PreconditionError("stage 2 needs h1'' <= 0 (max " + std::to_string(hh) + ")");
  DoublyWarpedMetric a(k1, h1, m, n, EndKind::closed_h, EndKind::closed_k);
  const double ric = grid_min([&](std::span<const double> p) { return sectional(a, p[0]).min_ricci(); },
                              GridSpec::line(a.lo(), a.hi(), 1025, 2), 0.0)
                         .min_margin;
  if (!(ric > 0)) throw PreconditionError("stage 2 needs a Ricci-positive starting metric");
  const Jet3Curve kr(ex::cos(R, 1 / R, 0), 0, k1.hi()), hr(ex::sin(R, 1 / R, 0), 0, k1.hi());
  return MetricPath::warped_affine(std::move(a), DoublyWarpedMetric(kr, hr, m, n, EndKind::closed_h, EndKind::closed_k),
                                   1, 2);
}

StageOneSearch search_stage1_nu(EsphereParams base, const GridSpec& grid, double lo, double hi, double tol) {
  StageOneSearch out;
  const auto pred = [&](double nu) {
    NuTrial t;
    t.nu = nu;
    try {
      base.nu = nu;
      const auto prof = make_esphere_profile(base);
      const auto path = isotopy_stage1(prof, make_kandh_target(prof));
      t.built = true;
      GridSpec g = grid;
      g.axes.at(1).lo = 0;
      g.axes.at(1).hi = prof.T;
      t.margin = path.min_ricci(g).min_margin;
    } catch (const PreconditionError&) {
      t.built = false;
    }
    out.trace.push_back(t);
    return t.built && t.margin > 1e-6;
  };
  out.nu_star = bisect_param(pred, lo, hi, tol);
  return out;
}

// ---------------------------------------------------------------- concordance

ConcordanceParams ConcordanceParams::from_times(double t0, double t1, double r0, double r1, double nu, double C) {
  if (!(t0 > 1 && t1 > t0)) throw PreconditionError("concordance: need 1 < t0 < t1");
  return {std::log(t0), std::log(t1), r0, r1, nu, C};
}

double ConcordanceParams::t0() const { return std::exp(u0); }
double ConcordanceParams::t1() const { return std::exp(u1); }
double ConcordanceParams::L() const { return std::log(r1) - std::log(r0); }
double ConcordanceParams::inv_alpha() const { return 1 / (1 / u0 - 1 / u1); }
double ConcordanceParams::inv_beta() const { return L() * inv_alpha(); }

void ConcordanceParams::validate() const {
  if (!(u0 > 0 && u1 > u0)) throw PreconditionError("concordance: need 1 < t0 < t1");
  if (!(r0 > 0 && r0 < r1 && r1 < 1)) throw PreconditionError("concordance: need 0 < r0 < r1 < 1");
  if (!(2 * r1 < nu)) throw PreconditionError("concordance: need 2 r1 < nu");
  if (!(C >= 0) || !(L() > C)) throw PreconditionError("concordance: need ln r1 - ln r0 > C");
}

double gamma_fn(double t) {
  const double l = std::log(t);
  return 1 / (t * l * l);
}

Schedule concordance_schedule(const ConcordanceParams& p) {
  p.validate();
  const double t0 = p.t0(), t1 = p.t1();
  if (!std::isfinite(t1)) throw PreconditionError("concordance schedule: t1 not representable");
  const double D = p.inv_alpha(), L = p.L();
  const Expr inv_ln = ex::compose(ex::pow(1, -1, 1, 0), ex::log(1, 1, 0));
  Schedule s;
  s.lambda = Jet3Curve(ex::sum({ex::constant(D / p.u0), ex::scale(-D, inv_ln)}), t0, t1);
  s.rho = Jet3Curve(
      ex::compose(ex::exp(1, 1, 0), ex::sum({ex::constant(std::log(p.r1) - L * D / p.u0), ex::scale(L * D, inv_ln)})),
      t0, t1);
  return s;
}

CEstimate estimate_C(const MetricPath& path, const GridSpec& grid) {
  CEstimate c;
  const auto sup = [&](const std::function<double(std::span<const double>)>& f) {
    return -grid_min([&](std::span<const double> p) { return -std::abs(f(p)); }, grid, 0.0).min_margin;
  };
  if (path.kind() == MetricPath::Kind::round_radius) {
    if (grid.axes.size() != 1) throw PreconditionError("estimate_C: round path grid must be one-dimensional");
    const auto& r = path.radius();
    c.second_form = sup([&](std::span<const double> p) {
      const Jet3 j = r.eval_upto(p[0], 1);
      return j.d1 / j.value;
    });
    c.second_form_rate = sup([&](std::span<const double> p) {
      const Jet3 j = r.eval_upto(p[0], 2);
      const double form = (j.d1 * j.d1 + j.value * j.d2) / (j.value * j.value);
      const double shape = j.d2 / j.value - (j.d1 / j.value) * (j.d1 / j.value);
      return std::max(std::abs(form), std::abs(shape));
    });
    c.mixed_ricci = 0;
  } else {
    if (grid.axes.size() != 2) throw PreconditionError("estimate_C: warped path grid must be (s, sigma)");
    const auto& A = path.start();
    const auto& B = path.end();
    const double lo = A.lo(), hi = A.hi(), g = 1e-4 * (hi - lo);
    const auto jets = [&](double w, double x, int order) {
      x = std::clamp(x, lo + g, hi - g);
      const Jet3 ka = A.k.eval_upto(x, order), kb = B.k.eval_upto(x, order);
      const Jet3 ha = A.h.eval_upto(x, order), hb = B.h.eval_upto(x, order);
      return std::array<Jet3, 4>{(1 - w) * ka + w * kb, kb - ka, (1 - w) * ha + w * hb, hb - ha};
    };
    c.second_form = sup([&](std::span<const double> p) {
      const auto j = jets(p[0], p[1], 0);
      return std::max(std::abs(j[1].value / j[0].value), std::abs(j[3].value / j[2].value));
    });
    c.second_form_rate = sup([&](std::span<const double> p) {
      const auto j = jets(p[0], p[1], 0);
      const double a = j[1].value / j[0].value, b = j[3].value / j[2].value;
      return std::max(a * a, b * b);
    });
    c.mixed_ricci = sup([&](std::span<const double> p) {
      const auto j = jets(p[0], p[1], 1);
      return A.m * j[1].d1 / j[0].value + (A.n - 1) * j[3].d1 / j[2].value;
    });
  }
  c.raw = std::max({c.second_form, c.second_form_rate, c.mixed_ricci});
  c.C = std::max(1.1 * c.raw, 1e-6);
  return c;
}

ConcordanceBounds concordance_bounds(const ConcordanceParams& p, int dim, double min_ric, double u) {
  const double N = dim, C = p.C, D = p.inv_alpha(), Lb = p.inv_beta();
  const double tG = 1 / (u * u);
  const double t2Gp = -1 / (u * u) - 2 / (u * u * u);
  const double lam1 = D * tG, lam2 = D * t2Gp;
  const double wt = 1 - Lb * tG;
  const double ff = Lb * (t2Gp + 2 * tG) - (Lb * tG) * (Lb * tG);
  const double log_rho = std::log(p.r1) - Lb * (1 / p.u0 - 1 / u);
  const double rho = std::exp(log_rho);
  ConcordanceBounds b;
  b.time = N * (ff - C * std::abs(lam2) - C * lam1 * lam1 - 2 * C * std::abs(wt) * lam1 - C * C * lam1 * lam1);
  b.space = min_ric / (rho * rho) + ff - (N - 1) * wt * wt - 2 * N * C * std::abs(wt) * lam1 - N * C * C * lam1 * lam1 -
            C * std::abs(lam2) - C * lam1 * lam1;
  b.mixed = C * lam1 / rho;
  const double A = b.time, B = b.space, M = b.mixed;
  const double big = 0.5 * (A + B) + std::sqrt(0.25 * (A - B) * (A - B) + M * M);
  b.theta_split = big > 0 ? (A * B - M * M) / big : big;
  return b;
}

double foiled_theta0(const ConcordanceParams& p, int dim) {
  const double L = p.L(), C = p.C;
  const auto f = [&](double th) {
    const double c = std::cos(th), s = std::sin(th);
    return c * c * dim * (L - C) - s * c * C / p.r0 - (L - C);
  };
  if (!(f(0) > 0)) return 0;
  return bisect_param([&](double th) { return f(th) > 0; }, 0, kPi / 2, 1e-12);
}

std::vector<SpotCheck> concordance_spot_check(const MetricPath& path, const ConcordanceParams& p, double min_ric,
                                              int count, unsigned seed) {
  if (path.kind() != MetricPath::Kind::round_radius) return {};
  const int N = path.dimension();
  const double D = p.inv_alpha(), Lb = p.inv_beta();
  const auto psi = [&](double u) {
    const double lam = std::clamp(D * (1 / p.u0 - 1 / u), 0.0, 1.0);
    return std::log(p.r1) - Lb * (1 / p.u0 - 1 / u) + std::log(path.radius()(lam));
  };
  std::mt19937_64 rng(seed);
  std::vector<SpotCheck> out;
  const double h = 1e-4 * (p.u1 - p.u0);
  for (int i = 0; i < count; ++i) {
    const double x = double(rng() >> 11) * 0x1.0p-53;
    const double u = p.u0 + 2 * h + x * (p.u1 - p.u0 - 4 * h);
    const double fm = psi(u - h), f0 = psi(u), fp = psi(u + h);
    const double d1 = (fp - fm) / (2 * h), d2 = (fp - 2 * f0 + fm) / (h * h);
    const double core = d2 + d1 + d1 * d1;
    SpotCheck sc;
    sc.u = u;
    sc.ric_tt = -N * core;
    sc.ric_yy = -core + (N - 1) * (std::exp(-2 * f0) - (1 + d1) * (1 + d1));
    const auto b = concordance_bounds(p, N, min_ric, u);
    sc.bound_tt = b.time;
    sc.bound_yy = b.space;
    out.push_back(sc);
  }
  return out;
}

ConcordanceResult concordance_search(const MetricPath& path, double nu, const ConcordanceOptions& opt) {
  if (!(nu > 0 && nu < 1)) throw PreconditionError("concordance: nu must lie in (0, 1); 2 r1 < nu is impossible");
  ConcordanceResult res;
  const int N = path.dimension();
  GridSpec pgrid = opt.path_grid, cgrid = opt.path_grid;
  if (path.kind() == MetricPath::Kind::warped_affine) {
    const Axis sa{path.start().lo(), path.start().hi(), 257};
    pgrid.axes = {Axis{path.lam0(), path.lam1(), opt.path_grid.axes.at(0).count}, sa};
    cgrid.axes = {Axis{0, 1, opt.path_grid.axes.at(0).count}, sa};
  }
  auto ric = path.min_ricci(pgrid, 0.0);
  ric.quantity_id = "path_min_ricci";
  res.min_ric = ric.min_margin;
  if (!(res.min_ric > 0)) throw PreconditionError("concordance: path is not Ricci-positive");
  res.C = estimate_C(path, cgrid);

  ConcordanceParams p;
  p.nu = nu;
  p.C = res.C.C;
  p.r1 = std::min({0.45 * nu, 0.95 * std::sqrt(res.min_ric / std::max(2, N - 1)), 0.99});
  p.r0 = p.r1 * std::exp(-(4 * p.C + 1));
  const double ln2 = std::log(2.0);

  for (int it = 1; it <= opt.max_iterations; ++it) {
    p.u0 = it * ln2;
    p.u1 = 2 * p.u0;
    const GridSpec ug = GridSpec::line(p.u0, p.u1, opt.u_count, opt.u_depth);
    std::vector<PositivityCertificate> certs;
    const auto bound_cert = [&](const char* id, auto pick) {
      certs.push_back(grid_min([&](std::span<const double> x) { return pick(concordance_bounds(p, N, res.min_ric, x[0])); },
                               ug, opt.threshold, id));
    };
    bound_cert("time_ricci", [](const ConcordanceBounds& b) { return b.time; });
    bound_cert("space_ricci", [](const ConcordanceBounds& b) { return b.space; });
    bound_cert("mixed_ricci", [](const ConcordanceBounds& b) {
      return b.time > 0 && b.space > 0 ? std::sqrt(b.time * b.space) - b.mixed : std::min(b.time, b.space);
    });
    bound_cert("theta_split", [](const ConcordanceBounds& b) { return b.theta_split; });

    const double D = p.inv_alpha(), Lb = p.inv_beta();
    std::vector<Condition> bd;
    const double rho0 = std::exp(std::log(p.r1) - Lb * (1 / p.u0 - 1 / p.u0));
    const double rho1 = std::exp(std::log(p.r1) - Lb * (1 / p.u0 - 1 / p.u1));
    bd.push_back(cond("iso_00_start_isometric", 1e-12 - std::abs(rho0 / p.r1 - 1), 0));
    bd.push_back(cond("iso_01_start_curvature_above_minus_nu",
                      nu - p.r1 * (1 - (Lb - p.C * D) / (p.u0 * p.u0)), opt.threshold));
    bd.push_back(cond("iso_10_end_isometric", 1e-12 - std::abs(rho1 / p.r0 - 1), 0));
    bd.push_back(cond("iso_11_end_curvature_positive", 1 - (Lb + p.C * D) / (p.u1 * p.u1), opt.threshold));

    res.iterations = it;
    std::string failing;
    for (const auto& c : certs)
      if (!c.passed && failing.empty()) failing = c.quantity_id;
    for (const auto& c : bd)
      if (!c.passed && failing.empty()) failing = c.id;
    if (failing.empty()) {
      res.params = p;
      res.certificates = std::move(certs);
      res.certificates.insert(res.certificates.begin(), ric);
      res.boundary = std::move(bd);
      res.ln_R = p.u0 + std::log(p.r0) - std::log(p.r1);
      res.theta0 = foiled_theta0(p, N);
      res.spot_checks = concordance_spot_check(path, p, res.min_ric, opt.spot_checks, opt.seed);
      res.passed = true;
      for (const auto& s : res.spot_checks)
        if (!(s.ric_tt > 0 && s.ric_yy > 0)) res.passed = false;
      return res;
    }
    res.trace.push_back({p.u0, failing});
  }
  throw PreconditionError("concordance search exceeded " + std::to_string(opt.max_iterations) +
                          " iterations; last failing bound " + res.trace.back().second);
}

// ---------------------------------------------------------------- triangle

TriangleEval triangle_at(double r, double tau, double eta) {
  const double th0 = kPi / 2 - eta * std::sin(kPi * tau), thr = kPi - tau * kPi / 2;
  const double c1 = -std::cos(thr) * std::cos(th0) + std::sin(thr) * std::sin(th0) * std::cos(r);
  TriangleEval e;
  e.theta1 = std::acos(std::clamp(c1, -1.0, 1.0));
  e.sin_z = std::sin(th0) * std::sin(r) / std::sqrt(std::max(0.0, 1 - c1 * c1));
  return e;
}

TriangleSolution solve_geodesic_triangle(double r, double eta) {
  if (!(r > 0 && r < kPi / 4)) throw PreconditionError("triangle: need 0 < r < pi/4");
  if (!(eta > 0 && eta < kPi / 2)) throw PreconditionError("triangle: need 0 < eta < pi/2");
  const double target = std::sin(2 * r);
  const auto f = [&](double tau) { return triangle_at(r, tau, eta).sin_z - target; };
  const double f0 = f(0), f1 = f(1);
  if (!(f0 < 0 && f1 > 0)) throw PreconditionError("triangle: no bracket along the path");
  boost::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(f, 0.0, 1.0, f0, f1,
                                                        boost::math::tools::eps_tolerance<double>(52), iters);
  TriangleSolution s;
  s.r = r;
  s.tau = std::abs(f(a)) <= std::abs(f(b)) ? a : b;
  s.theta0 = kPi / 2 - eta * std::sin(kPi * s.tau);
  s.theta_r = kPi - s.tau * kPi / 2;
  const auto e = triangle_at(r, s.tau, eta);
  s.theta1 = e.theta1;
  s.residual = std::abs(e.sin_z - target);
  const double cz = (std::cos(s.theta0) + std::cos(s.theta_r) * std::cos(s.theta1)) /
                    (std::sin(s.theta_r) * std::sin(s.theta1));
  s.z = std::acos(std::clamp(cz, -1.0, 1.0));
  const double cx = std::cos(r) * std::cos(s.z) + std::sin(r) * std::sin(s.z) * std::cos(s.theta_r);
  s.x1 = std::acos(std::clamp(cx, -1.0, 1.0));
  return s;
}

// ---------------------------------------------------------------- reports

nlohmann::json to_json(const EsphereProfile& p) {
  return {{"R", p.params.R},
          {"nu", p.params.nu},
          {"b1", p.params.b1},
          {"eps", p.eps},
          {"delta", p.delta},
          {"eps_k", p.eps_k},
          {"delta_k", p.delta_k},
          {"breakpoints", {{"T0", p.T0}, {"T1", p.T1}, {"T2", p.T2}, {"T3", p.T3}, {"T", p.T}}},
          {"docking", {{"sigma", p.sigma}, {"kappa", p.kappa}, {"s", p.s_dock}, {"j", p.knee_j}, {"theta", p.knee_theta}}},
          {"conditions", to_json(p.conditions)}};
}

nlohmann::json to_json(const ConcordanceResult& r) {
  nlohmann::json certs = nlohmann::json::array();
  for (const auto& c : r.certificates) certs.push_back(to_json(c));
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& [u, id] : r.trace) trace.push_back({{"ln_t0", u}, {"failing", id}});
  nlohmann::json spots = nlohmann::json::array();
  for (const auto& s : r.spot_checks)
    spots.push_back({{"u", s.u}, {"ric_tt", s.ric_tt}, {"ric_yy", s.ric_yy}, {"bound_tt", s.bound_tt},
                     {"bound_yy", s.bound_yy}});
  const auto& p = r.params;
  return {{"params",
           {{"ln_t0", p.u0}, {"ln_t1", p.u1}, {"r0", p.r0}, {"r1", p.r1}, {"nu", p.nu}, {"C", p.C}, {"L", p.L()}}},
          {"C_estimate",
           {{"second_form", r.C.second_form},
            {"second_form_rate", r.C.second_form_rate},
            {"mixed_ricci", r.C.mixed_ricci},
            {"raw", r.C.raw},
            {"C", r.C.C}}},
          {"min_ricci", r.min_ric},
          {"theta0", r.theta0},
          {"iterations", r.iterations},
          {"ln_R", r.ln_R},
          {"certificates", certs},
          {"boundary", to_json(r.boundary)},
          {"trace", trace},
          {"spot_checks", spots},
          {"passed", r.passed}};
}

nlohmann::json to_json(const TriangleSolution& t) {
  return {{"r", t.r},         {"tau", t.tau}, {"theta0", t.theta0}, {"theta_r", t.theta_r}, {"theta1", t.theta1},
          {"z", t.z},         {"x1", t.x1},   {"residual", t.residual}};
}

}  // namespace wc
