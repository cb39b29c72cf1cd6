#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "doctest.h"
#include "wc/constructions.hpp"

using namespace wc;
using doctest::Approx;
constexpr double pi = std::numbers::pi;

namespace {
const Condition* find(const std::vector<Condition>& cs, const std::string& id) {
  for (const auto& c : cs)
    if (c.id == id) return &c;
  return nullptr;
}

double sup_abs_diff(const Jet3Curve& a, const Jet3Curve& b, double lo, double hi) {
  double m = 0;
  for (int i = 0; i <= 2000; ++i) {
    const double s = lo + (hi - lo) * i / 2000;
    m = std::max(m, std::abs(a(s) - b(s)));
  }
  return m;
}
}  // namespace

TEST_CASE("handle at nu = 0 is the round cap times a flat factor") {
  HandleParams hp;
  hp.nu = 0;
  const auto g = make_handle(hp);
  for (double s : {0.3, 1.0, 1.9}) {
    const auto c = sectional(g, s);
    CHECK(c.Ric_s == Approx(2.0 / 16).epsilon(1e-12));
    CHECK(c.Ric_k == Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("handle profile invariants and linear convergence in nu") {
  for (const char* shape : {"quartic", "concave_end"}) {
    HandleParams hp;
    hp.shape = shape;
    const double Tg = hp.glue_point();
    double prev = 0;
    for (double nu : {0.04, 0.02, 0.01}) {
      hp.nu = nu;
      const auto f = hp.fnu();
      const Jet3 a = f.eval(0, Side::right);
      CHECK(a.value == Approx(1).epsilon(1e-15));
      CHECK(std::abs(a.d1) < 1e-15);
      CHECK(std::abs(a.d3) < 1e-15);
      CHECK(f.eval(Tg, Side::left).d1 > nu);
      double dev = 0;
      for (int i = 0; i <= 400; ++i) dev = std::max(dev, std::abs(f(Tg * i / 400) - 1));
      if (prev > 0) CHECK(prev / dev == Approx(2).epsilon(1e-9));
      prev = dev;
    }
  }
  HandleParams bad;
  bad.shape = "cubic";
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
}

TEST_CASE("esphere profile at nu = 0.05, R = 2, b1 = pi/6") {
  EsphereParams ep;
  ep.b1 = pi / 6;
  const auto p = make_esphere_profile(ep);
  CHECK(all_passed(p.conditions));
  CHECK(p.conditions.size() == 11);
  CHECK(p.k.eval(p.T, Side::left).d1 == Approx(-1).epsilon(1e-9));
  double worst = 1e9;
  for (int i = 0; i <= 4000; ++i) {
    const double s = 1e-6 + (p.T1 - 1e-6) * i / 4000;
    const Jet3 j = p.h.eval_upto(s, 2);
    worst = std::min(worst, -j.d2 / j.value);
  }
  CHECK(worst >= 1 / (5 * ep.R * ep.R));
  CHECK(find(p.conditions, "h_curvature_before_T1")->margin > 0);
  CHECK(p.T0 < p.T1);
  CHECK(p.T1 < p.T2);
  CHECK(p.T2 < p.T3);
  CHECK(p.T3 < p.T);
}

TEST_CASE("esphere rejects bad input") {
  EsphereParams ep;
  ep.nu = 0;
  CHECK_THROWS_AS(make_esphere_profile(ep), PreconditionError);
  ep.nu = 0.05;
  ep.b1 = pi / 2;
  CHECK_THROWS_AS(make_esphere_profile(ep), PreconditionError);
  ep.b1 = pi / 4;
  ep.eps = 0.1;
  ep.delta = 0.2;
  CHECK_THROWS_AS(make_esphere_profile(ep), PreconditionError);
}

TEST_CASE("isotopy stages share endpoints") {
  EsphereParams ep;
  ep.nu = 0.01;
  ep.b1 = pi / 4;
  const auto prof = make_esphere_profile(ep);
  const auto tg = make_kandh_target(prof);
  CHECK(all_passed(tg.conditions));
  CHECK(tg.k1(prof.T1) == Approx(prof.k(prof.T1)).epsilon(1e-12));
  CHECK(sup_abs_diff(tg.h1, prof.h, 0, prof.T0) < 1e-12);

  const auto p1 = isotopy_stage1(prof, tg);
  const auto p2 = isotopy_stage2(tg.k1, tg.h1, ep.m, ep.n);
  const auto a = p1.at(0), b = p1.at(1), c = p2.at(1), d = p2.at(2);
  CHECK(sup_abs_diff(a.k, prof.k, 0, prof.T) == 0);
  for (int i = 0; i <= 500; ++i) {
    const double s = prof.T * i / 500;
    CHECK(b.k(s) == c.k(s));
    CHECK(b.h(s) == c.h(s));
  }
  const double Rr = 2 * prof.T / pi;
  CHECK(d.k(0.7) == Approx(Rr * std::cos(0.7 / Rr)).epsilon(1e-14));
  CHECK(d.h(0.7) == Approx(Rr * std::sin(0.7 / Rr)).epsilon(1e-14));

  GridSpec g;
  g.axes = {{0, 1, 17}, {0, 1, 129}};
  g.depth = 1;
  CHECK(p1.min_ricci(g).passed);
  g.axes[0] = {1, 2, 17};
  CHECK(p2.min_ricci(g).passed);
}

TEST_CASE("stage 2 rejects a non-concave start") {
  const double T = pi;
  Jet3Curve k(ex::cos(2, 0.5, 0), 0, T), h(ex::poly({0, 1, 0.01}), 0, T);
  CHECK_THROWS_AS(isotopy_stage2(k, h, 3, 3), PreconditionError);
}

TEST_CASE("concordance schedule identities") {
  const auto p = ConcordanceParams::from_times(std::exp(1.0), std::exp(2.0), 0.01, 0.02, 0.1, 0.5);
  CHECK(1 / p.inv_alpha() == Approx(0.5).epsilon(1e-14));
  const auto s = concordance_schedule(p);
  const double t0 = p.t0(), t1 = p.t1();
  CHECK(std::abs(s.lambda(t0)) < 1e-12);
  CHECK(std::abs(s.lambda(t1) - 1) < 1e-12);
  CHECK(std::abs(s.rho(t0) - 0.02) < 1e-12);
  CHECK(std::abs(s.rho(t1) - 0.01) < 1e-12);
  const double alpha = 1 / p.inv_alpha(), beta = 1 / p.inv_beta();
  double worst = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = t0 + (t1 - t0) * i / 1000;
    const double G = 1 / (t * std::log(t) * std::log(t));
    const Jet3 l = s.lambda.eval_upto(t, 1), r = s.rho.eval_upto(t, 1);
    worst = std::max({worst, std::abs(alpha * l.d1 - G), std::abs(beta * r.d1 / r.value + G)});
  }
  CHECK(worst < 1e-10);
  CHECK(gamma_fn(std::exp(1.0)) == Approx(std::exp(-1.0)).epsilon(1e-15));

  CHECK_THROWS_AS(ConcordanceParams::from_times(3, 2, 0.01, 0.02, 0.1, 0.5).validate(), PreconditionError);
  CHECK_THROWS_AS(ConcordanceParams::from_times(2, 3, 0.01, 0.02, 0.03, 0.5).validate(), PreconditionError);
  CHECK_THROWS_AS(ConcordanceParams::from_times(2, 3, 0.019, 0.02, 0.1, 0.5).validate(), PreconditionError);
}

TEST_CASE("C estimate on the round bump path") {
  const auto path = MetricPath::round_radius(3, Jet3Curve(ex::sum({ex::constant(1), ex::sin(0.1, pi, 0)}), 0, 1));
  const auto est = estimate_C(path, GridSpec::line(0, 1, 65, 2));
  double raw = 0;
  for (int i = 0; i <= 20000; ++i) {
    const double s = i / 20000.0;
    const double r = 1 + 0.1 * std::sin(pi * s), r1 = 0.1 * pi * std::cos(pi * s),
                 r2 = -0.1 * pi * pi * std::sin(pi * s);
    raw = std::max({raw, std::abs(r1 / r), std::abs((r1 * r1 + r * r2) / (r * r)),
                    std::abs(r2 / r - (r1 / r) * (r1 / r))});
  }
  CHECK(est.raw == Approx(raw).epsilon(1e-3));
  CHECK(est.C == Approx(1.1 * est.raw).epsilon(1e-12));
  CHECK(est.mixed_ricci == 0);

  const auto flat = MetricPath::round_radius(3, Jet3Curve(ex::constant(1), 0, 1));
  CHECK(estimate_C(flat, GridSpec::line(0, 1, 9)).C == Approx(1e-6));
}

TEST_CASE("concordance search on the round bump path") {
  const auto path = MetricPath::round_radius(3, Jet3Curve(ex::sum({ex::constant(1), ex::sin(0.1, pi, 0)}), 0, 1));
  const auto r = concordance_search(path, 0.05);
  REQUIRE(r.passed);
  CHECK(all_passed(r.boundary));
  CHECK(2 * r.params.r1 < 0.05);
  CHECK(r.params.L() > r.C.C);
  CHECK(r.params.u1 == Approx(2 * r.params.u0));
  for (const auto& c : r.certificates) CHECK(c.min_margin > 0);
  REQUIRE(r.spot_checks.size() == 20);
  for (const auto& s : r.spot_checks) {
    CHECK(s.ric_tt >= s.bound_tt - 1e-6 * std::abs(s.bound_tt));
    CHECK(s.ric_yy >= s.bound_yy - 1e-6 * std::abs(s.bound_yy));
    CHECK(s.ric_tt > 0);
    CHECK(s.ric_yy > 0);
  }
  const auto again = concordance_search(path, 0.05);
  CHECK(again.params.u0 == r.params.u0);
  CHECK(again.params.r0 == r.params.r0);
  CHECK(again.params.r1 == r.params.r1);
}

TEST_CASE("concordance search edge cases") {
  const auto flat = MetricPath::round_radius(3, Jet3Curve(ex::constant(1), 0, 1));
  const auto r = concordance_search(flat, 0.1);
  CHECK(r.passed);
  CHECK(r.params.u0 < 10);
  CHECK_THROWS_AS(concordance_search(flat, 0), PreconditionError);
}

TEST_CASE("geodesic triangle against vector geometry") {
  for (double r : {0.1, 0.3, 0.5, 0.7}) {
    const auto s = solve_geodesic_triangle(r);
    CHECK(s.residual < 1e-12);
    CHECK(std::sin(s.z) == Approx(std::sin(2 * r)).epsilon(1e-12));
    CHECK(s.z == Approx(pi - 2 * r).epsilon(1e-10));
    CHECK(s.x1 > r);
    CHECK(s.theta0 < pi / 2);
    CHECK(s.theta_r > pi / 2);
    // P carries theta_r, Q carries theta0, |PQ| = r, |PV| = z.
    const Eigen::Vector3d P(0, 0, 1), Q(std::sin(r), 0, std::cos(r));
    const Eigen::Vector3d tq(std::cos(s.theta_r), std::sin(s.theta_r), 0);
    const Eigen::Vector3d V = std::cos(s.z) * P + std::sin(s.z) * tq;
    const auto tangent = [](const Eigen::Vector3d& at, const Eigen::Vector3d& to) {
      return (to - to.dot(at) * at).normalized();
    };
    const auto angle = [&](const Eigen::Vector3d& at, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
      return std::acos(std::clamp(tangent(at, a).dot(tangent(at, b)), -1.0, 1.0));
    };
    CHECK(angle(P, Q, V) == Approx(s.theta_r).epsilon(1e-10));
    CHECK(angle(Q, P, V) == Approx(s.theta0).epsilon(1e-10));
    CHECK(angle(V, P, Q) == Approx(s.theta1).epsilon(1e-10));
    CHECK(std::acos(Q.dot(V)) == Approx(s.x1).epsilon(1e-10));
  }
  CHECK_THROWS_AS(solve_geodesic_triangle(1.0), PreconditionError);
  CHECK_THROWS_AS(solve_geodesic_triangle(0.0), PreconditionError);
}
