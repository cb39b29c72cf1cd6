#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "corner_fixtures.hpp"
#include "doctest.h"
#include "wc/corner.hpp"

using namespace wc;
using doctest::Approx;
constexpr double pi = std::numbers::pi;

namespace {

CornerChart chart(Expr mu, Expr phi, std::vector<std::pair<Expr, Expr>> H, double lo = -1, double hi = 1,
                  ChartSide side = ChartSide::glued) {
  CornerChart c;
  c.a_lo = lo, c.a_hi = hi, c.b_lo = -3, c.b_hi = 3;
  c.mu = Jet3Curve(std::move(mu), lo, hi);
  c.phi = Jet3Curve(std::move(phi), lo, hi);
  std::vector<std::pair<Jet3Curve, Jet3Curve>> t;
  for (auto& [a, b] : H) t.emplace_back(Jet3Curve(a, lo, hi), Jet3Curve(b, c.b_lo, c.b_hi));
  c.H = separable(std::move(t));
  c.side = side;
  return c;
}

// II of the face b = phi(a) in da^2 + mu^2 db^2 + H^2 dz^2 from values only.
std::pair<double, double> fd_face_forms(const CornerChart& c, double a) {
  const double h = 1e-4;
  auto metric = [&](const Eigen::Vector3d& x) {
    Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
    g(0, 0) = 1;
    g(1, 1) = std::pow(c.mu(x(0)), 2);
    g(2, 2) = std::pow(c.H->table(x(0), x(1)).d[0][0], 2);
    return g;
  };
  auto F = [&](const Eigen::Vector3d& x) { return x(1) - c.phi(x(0)); };
  Eigen::Vector3d x(a, c.phi(a), 0.3);
  Eigen::Matrix3d g = metric(x), gi = g.inverse();
  Eigen::Matrix3d dg[3];
  Eigen::Vector3d dF;
  Eigen::Matrix3d ddF;
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d p = x, m = x;
    p(i) += h, m(i) -= h;
    dg[i] = (metric(p) - metric(m)) / (2 * h);
    dF(i) = (F(p) - F(m)) / (2 * h);
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d pp = p, pm = p, mp = m, mm = m;
      pp(j) += h, pm(j) -= h, mp(j) += h, mm(j) -= h;
      ddF(i, j) = (F(pp) - F(pm) - F(mp) + F(mm)) / (4 * h * h);
    }
  }
  Eigen::Matrix3d hess = ddF;
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double G = 0;
        for (int l = 0; l < 3; ++l) G += 0.5 * gi(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        hess(i, j) -= G * dF(k);
      }
  const double grad = std::sqrt(dF.dot(gi * dF));
  Eigen::Vector3d tau(1, (c.phi(a + h) - c.phi(a - h)) / (2 * h), 0), Z(0, 0, 1);
  tau /= std::sqrt(tau.dot(g * tau));
  Z /= std::sqrt(Z.dot(g * Z));
  return {tau.dot(hess * tau) / grad, Z.dot(hess * Z) / grad};
}

}  // namespace

TEST_CASE("face second form hand examples") {
  auto flat = chart(ex::constant(1), ex::constant(0), {{ex::constant(1), ex::exp(1, 0.7, 0)}});
  auto f = face_second_form(flat, 0.2);
  CHECK(f.II_tau == Approx(0));
  CHECK(f.II_Z == Approx(0.7));

  auto bent = chart(ex::constant(1), ex::poly({0, 0, -0.5}), {{ex::constant(1), ex::constant(1)}});
  auto g = face_second_form(bent, 0);
  CHECK(g.II_tau == Approx(1));
  CHECK(g.II_Z == Approx(0));

  auto tilted = chart(ex::poly({1, 1}), ex::poly({0, -1}), {{ex::constant(1), ex::constant(1)}}, -0.5, 0.5);
  CHECK(face_second_form(tilted, 0).II_tau == Approx(3 / (2 * std::sqrt(2.0))));
}

TEST_CASE("face forms agree with the finite-difference oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-0.4, 0.4);
  for (int t = 0; t < 4; ++t) {
    auto c = chart(ex::poly({1, U(rng), U(rng)}), ex::poly({0, U(rng), U(rng), U(rng)}),
                   {{ex::poly({1, U(rng), U(rng)}), ex::exp(1, U(rng), 0)},
                    {ex::sin(0.2, 1 + U(rng), 0), ex::poly({0.5, U(rng)})}});
    for (double a : {-0.5, 0.1, 0.6}) {
      const auto f = face_second_form(c, a);
      const auto [it, iz] = fd_face_forms(c, a);
      CHECK(f.II_tau == Approx(it).epsilon(1e-5));
      CHECK(f.II_Z == Approx(iz).epsilon(1e-5));
      CHECK((f.II_tau > 0) == (f.tau_clear > 0));
      CHECK((f.II_Z > 0) == (f.zed_clear > 0));
    }
  }
}

TEST_CASE("face profile Hessian") {
  auto geo = chart(ex::constant(1), ex::constant(0), {{ex::cos(1, 1, 0), ex::constant(1)}});
  CHECK(face_profile_hessian(geo, 0) == Approx(-2));
  CHECK(concavity_certificate(geo, GridSpec::line(-0.1, 0.1, 3)).min_margin == Approx(2 * std::cos(0.2)));
  auto flat = chart(ex::constant(1), ex::poly({0, 0.3}), {{ex::constant(2), ex::constant(1)}});
  CHECK(face_profile_hessian(flat, 0.4) == Approx(0));
  CHECK_FALSE(concavity_certificate(flat, GridSpec::line(-1, 1, 5)).passed);
  auto tilt = chart(ex::constant(1), ex::poly({0, -1}), {{ex::constant(1), ex::exp(1, 1, 0)}});
  CHECK(face_profile_hessian(tilt, 0) == Approx(2));

  // against a finite-difference arclength oracle on a curved chart
  auto c = chart(ex::poly({1, 0.2, -0.1}), ex::poly({0, 0.3, -0.4}), {{ex::poly({1, 0.1, -0.3}), ex::exp(1, 0.4, 0)}});
  const double a0 = 0.2;
  // arclength s(a) by Simpson, then d2/ds2 of H^2 along the face via a(s) inverse
  auto speed = [&](double a) {
    const double mu = c.mu(a), pa = c.phi.eval(a).d1;
    return std::sqrt(1 + mu * mu * pa * pa);
  };
  auto hval = [&](double a) { return std::pow(c.H->table(a, c.phi(a)).d[0][0], 2); };
  const double ds = 1e-3;
  auto a_at = [&](double s) {
    double a = a0;
    for (int it = 0; it < 50; ++it) {
      // integrate speed from a0 to a with Simpson
      const double integral = (a - a0) / 6 * (speed(a0) + 4 * speed(0.5 * (a0 + a)) + speed(a));
      a -= (integral - s) / speed(a);
    }
    return a;
  };
  const double fd = (hval(a_at(ds)) - 2 * hval(a0) + hval(a_at(-ds))) / (ds * ds);
  CHECK(face_profile_hessian(c, a0) == Approx(fd).epsilon(1e-4));
}

TEST_CASE("dihedral angle") {
  auto mk = [](double s, bool left) {
    return chart(ex::constant(1), ex::poly({0, s}), {{ex::constant(1), ex::constant(1)}}, left ? -1 : 0, left ? 0 : 1,
                 left ? ChartSide::left : ChartSide::right);
  };
  CHECK(dihedral_angle(mk(0, true), mk(0, false)) == Approx(pi));
  CHECK(dihedral_angle(mk(1, true), mk(-1, false)) == Approx(pi / 2));
  CHECK(dihedral_angle(mk(-1, true), mk(1, false)) > pi);
  for (double s1 : {0.3, 1.0, -0.2})
    for (double s2 : {-0.7, 0.1}) {
      const double cosa = (s1 - s2) / (std::sqrt(1 + s1 * s1) * std::sqrt(1 + s2 * s2));
      CHECK(dihedral_angle(mk(s1, true), mk(s2, false)) == Approx(pi / 2 + std::acos(cosa)));
    }
}

TEST_CASE("glue_and_smooth on the 2pi/3 pair") {
  auto L = fixtures::corner_chart(true), R = fixtures::corner_chart(false);
  CHECK(dihedral_angle(L, R) == Approx(2 * pi / 3));
  auto g = glue_and_smooth(L, R, 0.1, 0.025);
  for (double a : {-0.3, -0.2, -0.126}) {
    CHECK(g.phi(a) == L.phi(a));
    CHECK(g.mu(a) == L.mu(a));
    CHECK(g.H->table(a, -0.2).d[1][1] == L.H->table(a, -0.2).d[1][1]);
    CHECK(g.phi(-a) == R.phi(-a));
    CHECK(g.H->table(-a, 0.1).d[0][2] == R.H->table(-a, 0.1).d[0][2]);
  }
  for (double a : {0.02, 0.08, 0.11}) {
    CHECK(g.phi(a) == Approx(g.phi(-a)).epsilon(1e-12));
    CHECK(g.H->table(a, -0.1).d[0][0] == Approx(g.H->table(-a, -0.1).d[0][0]).epsilon(1e-12));
  }
  // H is C^2 in a across the window ends, per b
  for (double x : {-0.125, -0.075, 0.075, 0.125}) {
    const auto l = g.H->table(x - 1e-7, -0.3), r = g.H->table(x + 1e-7, -0.3);
    CHECK(std::abs(l.d[2][0] - r.d[2][0]) < 1e-4);
    CHECK(std::abs(l.d[2][1] - r.d[2][1]) < 1e-4);
  }
  auto cert = convexity_certificate(g, GridSpec::line(g.a_lo, g.a_hi, 401, 3));
  CHECK(cert.passed);
  auto conc = concavity_certificate(g, GridSpec::line(g.a_lo, g.a_hi, 401, 3));
  CHECK(conc.passed);

  CHECK_THROWS_AS(glue_and_smooth(R, L, 0.1, 0.02), PreconditionError);
  auto Rbad = R;
  Rbad.phi = Jet3Curve(ex::poly({0, 2}), 0, R.a_hi);
  CHECK_THROWS_AS(glue_and_smooth(fixtures::corner_chart(true, {.slope = -2}), Rbad, 0.1, 0.02), PreconditionError);
  auto Rmis = R;
  Rmis.H = separable({{Jet3Curve(ex::constant(1.1), 0, R.a_hi), Jet3Curve(ex::constant(1), -1, 0.5)}});
  CHECK_THROWS_AS(glue_and_smooth(L, Rmis, 0.1, 0.02), PreconditionError);
}

TEST_CASE("blow-up of the smoothed face curvature") {
  auto L = fixtures::corner_chart(true), R = fixtures::corner_chart(false);
  std::vector<double> es = {1e-1, 1e-2, 1e-3}, vals;
  const double s = 1 / std::sqrt(3.0);
  for (double e : es) {
    auto g = glue_and_smooth(L, R, e, e / 4);
    vals.push_back(g.phi.eval(0).d2);
    CHECK(vals.back() * 2 * e / (-2 * s) == Approx(1).epsilon(0.3));
  }
  const double slope = std::log(-vals[2] / -vals[0]) / std::log(es[2] / es[0]);
  CHECK(slope == Approx(-1).epsilon(0.05));
}

TEST_CASE("aligned faces need no corner smoothing") {
  auto L = fixtures::corner_chart(true, {.slope = 0, .kappa = 0}), R = fixtures::corner_chart(false, {.slope = 0, .kappa = 0});
  auto g = glue_and_smooth(L, R, 0.1, 0.02);
  for (double a : {-0.3, -0.05, 0.0, 0.07, 0.35}) CHECK(g.phi(a) == 0);
}
