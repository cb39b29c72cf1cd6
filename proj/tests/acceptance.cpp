#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "riemann_oracle.hpp"
#include "wc/constructions.hpp"
#include "wc/corner.hpp"
#include "wc/scenario.hpp"
#include "wc/spline.hpp"
#include "wc/verify.hpp"
#include "wc/warped.hpp"

using namespace wc;
using json = nlohmann::json;
constexpr double pi = std::numbers::pi;

namespace {

// regression constant for the stage-1 bisection (R = 2, m = n = 3, b1 = pi/3, tolerance 1e-4)
constexpr double kNuStar = 0.0145242;

const std::filesystem::path kScenarios = WC_SCENARIO_DIR;

json load(const std::string& name) {
  std::ifstream is(kScenarios / (name + ".json"));
  return json::parse(is);
}

RunResult run(const json& j, int threads = 0) { return run_scenario(j, {.threads = threads, .write_files = false}); }

struct Check {
  bool ok = true;
  std::string why;
  void require(bool c, const std::string& what) {
    if (!c && ok) {
      ok = false;
      why = what;
    }
  }
};

double loglog_slope(const std::vector<double>& x, const std::vector<double>& e) {
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) mx += std::log(x[i]), my += std::log(e[i]);
  mx /= x.size(), my /= x.size();
  double num = 0, den = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    num += (std::log(x[i]) - mx) * (std::log(e[i]) - my);
    den += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return num / den;
}

double max_over(double lo, double hi, int n, const std::function<double(double)>& f) {
  double m = 0;
  for (int i = 0; i <= n; ++i) m = std::max(m, f(lo + (hi - lo) * i / n));
  return m;
}

char buf[256];
const char* fmt(const char* f, double a, double b = 0) {
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

// ---------------------------------------------------------------- criteria

Check spline_exactness() {
  Check c;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2, 2);
  for (int t = 0; t < 20; ++t) {
    const Jet3 l{U(rng), U(rng), U(rng), 0}, r{U(rng), U(rng), U(rng), 0};
    for (double w : {1.0, 0.1, 0.01}) {
      const auto p3 = hermite_cubic(l, r, w), p5 = hermite_quintic(l, r, w);
      for (int k = 0; k <= 2; ++k) {
        const double s = std::pow(w, k);
        if (k <= 1) {
          c.require(std::abs(p3.eval_local(-w)[k] - l[k]) * s < 1e-9, "cubic left jet");
          c.require(std::abs(p3.eval_local(w)[k] - r[k]) * s < 1e-9, "cubic right jet");
        }
        c.require(std::abs(p5.eval_local(-w)[k] - l[k]) * s < 1e-9, "quintic left jet");
        c.require(std::abs(p5.eval_local(w)[k] - r[k]) * s < 1e-9, "quintic right jet");
      }
    }
  }
  for (double eps : {1.0, 0.1, 0.01}) {
    const auto p = hermite_cubic({eps, -1, 0, 0}, {eps, 1, 0, 0}, eps);
    c.require(std::abs(2 * eps * p.eval_local(0).d2 - 2) < 1e-12, fmt("2 eps p''(0) != 2 at eps=%g", eps));
  }
  const std::vector<double> eps = {1e-1, 1e-2, 1e-3, 1e-4};
  std::vector<double> dev;
  const Expr fl = ex::cos(1, -1, 0), fr = ex::cos(1, 1, 0);
  for (double e : eps) {
    const auto p = hermite_cubic(fl->eval(-e), fr->eval(e), e);
    dev.push_back(max_over(-e, e, 200, [&](double a) { return std::abs(p.eval_local(a).value - 1); }));
  }
  const double s1 = loglog_slope(eps, dev);
  c.require(s1 >= 0.9, fmt("first-order slope %.3f", s1));
  const std::vector<double> del = {1e-1, 1e-2, 1e-3, 1e-4};
  dev.clear();
  const Expr gl = ex::cos(1, 1, 0), gr = ex::poly({1, 0, 0.25});
  for (double d : del) {
    const Jet3 L = gl->eval(-d), R = gr->eval(d);
    const auto p = hermite_quintic(L, R, d);
    dev.push_back(max_over(-d, d, 400, [&](double a) {
      const double y = a / d, w = (5 * y * y * y - 9 * y + 4) / 8;
      return std::abs(p.eval_local(a).d2 - (w * L.d2 + (1 - w) * R.d2));
    }));
  }
  const double s2 = loglog_slope(del, dev);
  c.require(s2 >= 0.9, fmt("second-order slope %.3f", s2));
  return c;
}

void sphere_block(oracle::Mat& g, int off, int p, const oracle::Vec& x, double scale2) {
  double f = scale2;
  for (int i = 0; i < p; ++i) {
    g(off + i, off + i) = f;
    f *= std::sin(x(off + i)) * std::sin(x(off + i));
  }
}

Check curvature_oracle() {
  Check c;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(-0.3, 0.3);
  const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-5 * std::max(1.0, std::abs(b)); };
  for (int t = 0; t < 5; ++t) {
    const Jet3Curve k(ex::sum({ex::constant(1.2 + U(rng)), ex::sin(U(rng), 1.3 + U(rng), U(rng))}), 0.5, 2);
    const Jet3Curve h(ex::sum({ex::exp(0.8 + U(rng), U(rng), 0), ex::cos(U(rng), 2 + U(rng), U(rng))}), 0.5, 2);
    const DoublyWarpedMetric g(k, h, 3, 3);
    const double s = 1.1 + U(rng);
    const auto metric = [&](const oracle::Vec& x) {
      oracle::Mat G = oracle::Mat::Zero(6, 6);
      G(0, 0) = 1;
      sphere_block(G, 1, 3, x, k(x(0)) * k(x(0)));
      sphere_block(G, 4, 2, x, h(x(0)) * h(x(0)));
      return G;
    };
    oracle::Vec x(6);
    x << s, 1.0, 1.2, 0.4, 1.3, 0.7;
    const auto r = oracle::riemann(metric, x);
    const auto q = sectional(g, s);
    const auto ric = r.ricci();
    c.require(close(q.K_sk, r.sectional(0, 1)) && close(q.K_sh, r.sectional(0, 4)) &&
                  close(q.K_kk, r.sectional(1, 2)) && close(q.K_hh, r.sectional(4, 5)) &&
                  close(q.K_kh, r.sectional(2, 5)),
              fmt("sectional mismatch on metric %g", t));
    c.require(close(q.Ric_s, ric(0, 0)) && close(q.Ric_k, ric(1, 1) / r.g(1, 1)) &&
                  close(q.Ric_h, ric(4, 4) / r.g(4, 4)),
              fmt("Ricci weight mismatch on metric %g", t));
  }
  return c;
}

Check round_sphere() {
  Check c;
  for (double R : {1.0, 2.0}) {
    const double T = pi * R / 2;
    const DoublyWarpedMetric g(Jet3Curve(ex::cos(R, 1 / R, 0), 0, T), Jet3Curve(ex::sin(R, 1 / R, 0), 0, T), 3, 3,
                               EndKind::closed_h, EndKind::closed_k);
    for (int i = 0; i < 1000; ++i) {
      const auto q = sectional(g, T * i / 999);
      for (double K : {q.K_sk, q.K_sh, q.K_kk, q.K_hh, q.K_kh})
        c.require(std::abs(K - 1 / (R * R)) < 1e-8, fmt("R=%g s=%g", R, T * i / 999));
    }
  }
  return c;
}

Check corner_smoothing(const RunResult& r) {
  Check c;
  c.require(r.exit_code == 0, "glue-corner scenario did not pass");
  if (!c.ok) return c;
  const auto& res = r.report["result"];
  c.require(std::abs(res["dihedral_angle"].get<double>() - 2 * pi / 3) < 1e-12, "dihedral angle is not 2 pi/3");
  const auto& cv = res["certificates"][0];
  c.require(cv["quantity"] == "face_convexity" && cv["passed"] == true, "convexity certificate");
  c.require(cv["min_margin"].get<double>() > 1e-6, "convexity margin");
  c.require(cv["grid"]["depth"] == 3, "grid depth");
  c.require(res["max_change_outside_windows"].get<double>() == 0, "chart changed outside the windows");
  return c;
}

Check concavity(const RunResult& r) {
  Check c;
  const auto sc = load("glue-corner");
  for (const char* side : {"left", "right"}) {
    const auto ch = CornerChart::from_json(sc["params"][side]);
    for (int i = 0; i <= 400; ++i) {
      const double a = ch.a_lo + (ch.a_hi - ch.a_lo) * i / 400;
      c.require(face_profile_hessian(ch, a) < -1e-3, std::string("input profile Hessian on the ") + side);
    }
  }
  c.require(r.exit_code == 0, "glue-corner scenario did not pass");
  if (!c.ok) return c;
  const auto& cc = r.report["result"]["certificates"][1];
  c.require(cc["quantity"] == "profile_concavity" && cc["passed"] == true, "concavity certificate");
  c.require(cc["min_margin"].get<double>() > 1e-6, "concavity margin");
  return c;
}

Check stage_one(const RunResult& r) {
  Check c;
  c.require(r.exit_code == 0, "isotopy scenario did not pass");
  if (!c.ok) return c;
  const auto& res = r.report["result"];
  for (const auto& cond : res["profile"]["conditions"])
    c.require(cond["passed"] == true, "esphere condition " + cond["id"].get<std::string>());
  const double nu = res["nu_star"];
  c.require(nu > 0, "nu* not positive");
  c.require(std::abs(nu - kNuStar) < 1e-4, fmt("nu* = %.7f drifted from %.7f", nu, kNuStar));
  c.require(res["stage1"]["min_margin"].get<double>() > 1e-6, "stage-1 margin at nu*");
  const auto& ax = res["stage1"]["grid"]["axes"];
  c.require(ax[0]["count"] == 64 && ax[1]["count"] == 256 && res["stage1"]["grid"]["depth"] == 2, "grid shape");
  EsphereParams ep;
  ep.R = 2, ep.m = 3, ep.n = 3, ep.b1 = pi / 3;
  GridSpec grid;
  grid.depth = 2;
  for (double f : {0.5, 0.1}) {
    ep.nu = f * nu;
    const auto prof = make_esphere_profile(ep);
    grid.axes = {{0, 1, 64}, {0, prof.T, 256}};
    const auto cert = isotopy_stage1(prof, make_kandh_target(prof)).min_ricci(grid, 1e-6);
    c.require(cert.passed, fmt("stage 1 fails at nu = %g nu*", f));
  }
  return c;
}

Check stage_two(const RunResult& r) {
  Check c;
  c.require(r.exit_code == 0, "isotopy scenario did not pass");
  if (!c.ok) return c;
  const auto& res = r.report["result"];
  c.require(res["stage2"]["min_margin"].get<double>() > 1e-6, "stage-2 margin");
  c.require(res["stage2"]["grid"]["axes"][0]["lo"] == 1 && res["stage2"]["grid"]["axes"][0]["hi"] == 2,
            "stage-2 grid is not lambda in [1, 2]");
  const double dev = res["round_end_max_deviation"];
  c.require(dev < 1e-8, fmt("lambda=2 sectional deviation from 1/R^2 is %g", dev));
  return c;
}

Check concordance(const RunResult& r) {
  Check c;
  c.require(r.exit_code == 0, "concordance scenario did not pass");
  if (!c.ok) return c;
  const auto& res = r.report["result"];
  c.require(res["schedule"]["endpoint_residual"].get<double>() < 1e-10, "schedule endpoints");
  c.require(res["schedule"]["ode_relative_residual"].get<double>() < 1e-10, "schedule ODE residual");
  for (const char* q : {"time_ricci", "space_ricci", "mixed_ricci", "theta_split"}) {
    bool seen = false;
    for (const auto& cert : res["certificates"])
      if (cert["quantity"] == q) {
        seen = true;
        c.require(cert["passed"] == true && cert["min_margin"].get<double>() > 0, std::string("bound ") + q);
      }
    c.require(seen, std::string("missing bound ") + q);
  }
  c.require(res["boundary"].size() == 4, "boundary conditions");
  for (const auto& b : res["boundary"]) c.require(b["passed"] == true, b["id"].get<std::string>());
  c.require(res["spot_checks"].size() == 20, "spot-check count");
  for (const auto& s : res["spot_checks"])
    c.require(s["ric_tt"].get<double>() > 0 && s["ric_yy"].get<double>() > 0, "spot-check Ricci not positive");
  return c;
}

Check triangle() {
  Check c;
  for (double r : {pi / 16, pi / 8, pi / 6}) {
    auto j = load("triangle");
    j["params"]["r"] = r;
    const auto rr = run(j);
    c.require(rr.exit_code == 0, fmt("triangle scenario failed at r=%g", r));
    if (!c.ok) return c;
    const auto& res = rr.report["result"];
    c.require(res["residual"].get<double>() < 1e-10, fmt("residual at r=%g", r));
    c.require(res["x1"].get<double>() > r, fmt("x1 <= r at r=%g", r));
    c.require(std::abs(res["limits"]["sin_z_at_start"].get<double>() - std::sin(r)) < 1e-6, "limit sin r");
    c.require(std::abs(res["limits"]["sin_z_at_end"].get<double>() - 1) < 1e-6, "limit 1");
  }
  return c;
}

Check determinism(const std::vector<std::string>& names) {
  Check c;
  for (const auto& n : names) {
    const auto j = load(n);
    const auto a = dump_json(run(j, 1).report), b = dump_json(run(j, 8).report);
    c.require(a == b, n + " report differs between 1 and 8 workers");
  }
  return c;
}

}  // namespace

int main() {
  int failed = 0;
  const auto report = [&](int id, const char* title, double limit_s, const std::function<Check()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = f();
    } catch (const std::exception& e) {
      c.ok = false;
      c.why = std::string("exception: ") + e.what();
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.ok && dt > limit_s) c = {false, fmt("runtime %.1f s over the %.0f s budget", dt, limit_s)};
    std::printf("criterion %2d %s  %-32s %7.2f s%s%s\n", id, c.ok ? "PASS" : "FAIL", title, dt, c.ok ? "" : "  ",
                c.why.c_str());
    std::fflush(stdout);
    if (!c.ok) ++failed;
  };

  RunResult corner, iso, conc;
  report(1, "spline exactness", 1, spline_exactness);
  report(2, "curvature oracle", 10, curvature_oracle);
  report(3, "round sphere", 1, round_sphere);
  report(4, "corner smoothing", 30, [&] {
    corner = run(load("glue-corner"));
    return corner_smoothing(corner);
  });
  report(5, "concavity preservation", 30, [&] { return concavity(corner); });
  report(6, "isotopy stage 1", 120, [&] {
    iso = run(load("isotopy"));
    return stage_one(iso);
  });
  report(7, "isotopy stage 2", 60, [&] { return stage_two(iso); });
  report(8, "concordance", 120, [&] {
    conc = run(load("concordance"));
    return concordance(conc);
  });
  report(9, "spherical triangle", 1, triangle);
  report(10, "determinism", 600, [] { return determinism({"glue-corner", "isotopy", "concordance"}); });
  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
