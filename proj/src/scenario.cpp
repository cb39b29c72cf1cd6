#include "wc/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "wc/constructions.hpp"
#include "wc/corner.hpp"
#include "wc/spline.hpp"
#include "wc/warped.hpp"

namespace wc {

using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Reads one object, tracking the dotted path for error messages and rejecting unknown keys on finish().
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ParseError(path_ + ": expected an object");
  }

  std::string at(const std::string& k) const { return path_ + "." + k; }

  const json* find(const std::string& k) {
    seen_.insert(k);
    const auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& need(const std::string& k) {
    const json* v = find(k);
    if (!v) throw ParseError(at(k) + ": missing");
    return *v;
  }

  double num(const std::string& k) { return as_num(need(k), k); }
  double num(const std::string& k, double def) {
    const json* v = find(k);
    return v ? as_num(*v, k) : def;
  }
  int integer(const std::string& k) { return as_int(need(k), k); }
  int integer(const std::string& k, int def) {
    const json* v = find(k);
    return v ? as_int(*v, k) : def;
  }
  std::string str(const std::string& k, const std::string& def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_string()) throw ParseError(at(k) + ": expected a string");
    return v->get<std::string>();
  }
  bool flag(const std::string& k, bool def) {
    const json* v = find(k);
    if (!v) return def;
    if (!v->is_boolean()) throw ParseError(at(k) + ": expected true or false");
    return v->get<bool>();
  }

  Fields sub(const std::string& k) { return Fields(need(k), at(k)); }
  Fields sub_or_empty(const std::string& k) {
    const json* v = find(k);
    return v ? Fields(*v, at(k)) : Fields(empty(), at(k));
  }

  template <class F>
  auto parse(const std::string& k, F f) {
    const json& v = need(k);
    try {
      return f(v);
    } catch (const ParseError& e) {
      throw ParseError(at(k) + ": " + e.what());
    } catch (const json::exception& e) {
      throw ParseError(at(k) + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ParseError(at(k) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;

  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  double as_num(const json& v, const std::string& k) const {
    if (!v.is_number()) throw ParseError(at(k) + ": expected a number");
    return v.get<double>();
  }
  int as_int(const json& v, const std::string& k) const {
    if (!v.is_number_integer()) throw ParseError(at(k) + ": expected an integer");
    return v.get<int>();
  }
};

class Csv {
 public:
  explicit Csv(const std::string& header) { os_ << header << "\n"; }
  void row(std::initializer_list<double> xs) {
    bool first = true;
    char buf[40];
    for (double x : xs) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      os_ << (first ? "" : ",") << buf;
      first = false;
    }
    os_ << "\n";
  }
  std::ostream& stream() { return os_; }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

struct CommandOut {
  json result;
  bool passed = true;
  std::string csv;
};

Jet3 one_sided(const Jet3Curve& c, double x) { return c.eval(x, x < c.hi() ? Side::right : Side::left); }

double jump(const Jet3Curve& c, double x, int order) {
  const Jet3 l = c.eval(x, Side::left), r = c.eval(x, Side::right);
  const double d[4] = {l.value - r.value, l.d1 - r.d1, l.d2 - r.d2, l.d3 - r.d3};
  const double s[4] = {l.value, l.d1, l.d2, l.d3};
  double m = 0;
  for (int i = 0; i <= order; ++i) m = std::max(m, std::abs(d[i]) / (1 + std::abs(s[i])));
  return m;
}

Jet3Curve curve_field(Fields& f, const std::string& k) {
  return f.parse(k, [](const json& v) { return Jet3Curve::from_json(v); });
}

EndKind end_field(Fields& f, const std::string& k) {
  const std::string s = f.str(k, "boundary");
  try {
    return end_kind_from_string(s);
  } catch (const Error& e) {
    throw ParseError(f.at(k) + ": " + e.what());
  }
}

DoublyWarpedMetric metric_field(Fields f) {
  Jet3Curve k = curve_field(f, "k"), h = curve_field(f, "h");
  const int m = f.integer("m"), n = f.integer("n");
  const EndKind le = end_field(f, "left_end"), re = end_field(f, "right_end");
  f.finish();
  return DoublyWarpedMetric(std::move(k), std::move(h), m, n, le, re);
}

CornerChart chart_field(Fields& f, const std::string& k) {
  return f.parse(k, [](const json& v) { return CornerChart::from_json(v); });
}

// ---------------------------------------------------------------- commands

CommandOut spline_demo(Fields p) {
  const Jet3Curve raw = curve_field(p, "curve");
  const double kink = p.num("kink"), eps = p.num("eps"), delta = p.num("delta");
  const int samples = p.integer("samples", 401);
  p.finish();
  if (samples < 2) throw PreconditionError("samples must be at least 2");

  const Jet3Curve c1 = smooth_c1(raw, kink, eps);
  const Jet3Curve c2 = two_stage_smooth(raw, kink, eps, delta);
  const double c1_res = std::max(jump(c1, kink - eps, 1), jump(c1, kink + eps, 1));
  double c2_res = 0;
  for (double x : {kink - eps - delta, kink - eps + delta, kink + eps - delta, kink + eps + delta})
    c2_res = std::max(c2_res, jump(c2, x, 2));
  const double slope_jump = raw.eval(kink, Side::right).d1 - raw.eval(kink, Side::left).d1;
  const double p2 = c1.eval(kink).d2;

  Csv csv("x,raw,c1,c1_d1,c1_d2,c2,c2_d1,c2_d2");
  double outside = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = raw.lo() + (raw.hi() - raw.lo()) * i / (samples - 1);
    const Jet3 a = one_sided(c1, x), b = one_sided(c2, x);
    csv.row({x, raw(x), a.value, a.d1, a.d2, b.value, b.d1, b.d2});
    if (std::abs(x - kink) > eps + delta) outside = std::max(outside, std::abs(b.value - raw(x)));
  }

  CommandOut out;
  out.result = {{"kink", kink},
                {"eps", eps},
                {"delta", delta},
                {"slope_jump", slope_jump},
                {"c1_second_derivative_at_kink", p2},
                {"c1_predicted", slope_jump / (2 * eps)},
                {"c1_jet_residual", c1_res},
                {"c2_jet_residual", c2_res},
                {"max_change_outside_windows", outside}};
  out.passed = c1_res < 1e-9 && c2_res < 1e-9 && outside == 0;
  out.csv = csv.str();
  return out;
}

CommandOut curvature(Fields p) {
  Jet3Curve k = curve_field(p, "k"), h = curve_field(p, "h");
  const int m = p.integer("m"), n = p.integer("n");
  const EndKind le = end_field(p, "left_end"), re = end_field(p, "right_end");
  const int samples = p.integer("samples", 201);
  const double threshold = p.num("threshold", 1e-6);
  Fields g = p.sub_or_empty("grid");
  const int count = g.integer("count", 257), depth = g.integer("depth", 2);
  g.finish();
  p.finish();
  if (samples < 2) throw PreconditionError("samples must be at least 2");

  const DoublyWarpedMetric metric(std::move(k), std::move(h), m, n, le, re);
  const auto cert = min_ricci(metric, GridSpec::line(metric.lo(), metric.hi(), count, depth), threshold);
  std::ostringstream csv;
  write_curvature_csv_header(csv);
  for (int i = 0; i < samples; ++i)
    write_curvature_csv_row(csv, sectional(metric, metric.lo() + (metric.hi() - metric.lo()) * i / (samples - 1)));

  CommandOut out;
  out.result = {{"m", m}, {"n", n}, {"certificate", to_json(cert)}};
  out.passed = cert.passed;
  out.csv = csv.str();
  return out;
}

CommandOut glue_corner(Fields p) {
  const CornerChart L = chart_field(p, "left"), R = chart_field(p, "right");
  const double room = std::min(-L.a_lo, R.a_hi);
  const double eps_lo = p.num("eps_lo", 1e-3), eps_hi = p.num("eps_hi", 0.7 * room);
  const double tol = p.num("tol", 1e-4), threshold = p.num("threshold", 1e-6);
  const bool concavity = p.flag("concavity", false);
  const int samples = p.integer("samples", 401);
  Fields g = p.sub_or_empty("grid");
  const int count = g.integer("count", 401), depth = g.integer("depth", 3);
  g.finish();
  p.finish();
  if (!(0 < eps_lo && eps_lo < eps_hi)) throw PreconditionError("need 0 < eps_lo < eps_hi");
  if (samples < 2) throw PreconditionError("samples must be at least 2");

  const double angle = dihedral_angle(L, R);
  glue_and_smooth(L, R, eps_lo, eps_lo / 4);

  const auto certify = [&](const CornerChart& c) {
    const GridSpec gs = GridSpec::line(c.a_lo, c.a_hi, count, depth);
    std::vector<PositivityCertificate> cs{convexity_certificate(c, gs, threshold)};
    if (concavity) cs.push_back(concavity_certificate(c, gs, threshold));
    return cs;
  };
  const auto pred = [&](double eps) {
    try {
      for (const auto& c : certify(glue_and_smooth(L, R, eps, eps / 4)))
        if (!c.passed) return false;
      return true;
    } catch (const PreconditionError&) {
      return false;
    }
  };
  double eps = eps_hi;
  bool found = true;
  if (!pred(eps_hi)) {
    if (pred(eps_lo))
      eps = bisect_param(pred, eps_lo, eps_hi, tol);
    else {
      eps = eps_lo;
      found = false;
    }
  }
  const double delta = eps / 4;
  const CornerChart out_chart = glue_and_smooth(L, R, eps, delta);
  const auto certs = certify(out_chart);

  double outside = 0;
  for (int i = 0; i < samples; ++i) {
    const double a = out_chart.a_lo + (out_chart.a_hi - out_chart.a_lo) * i / (samples - 1);
    if (std::abs(a) <= eps + delta) continue;
    const CornerChart& src = a < 0 ? L : R;
    outside = std::max({outside, std::abs(out_chart.phi(a) - src.phi(a)), std::abs(out_chart.mu(a) - src.mu(a))});
    for (int j = 0; j <= 4; ++j) {
      const double b = out_chart.b_lo + (out_chart.b_hi - out_chart.b_lo) * j / 4;
      outside = std::max(outside, std::abs(out_chart.H->table(a, b).d[0][0] - src.H->table(a, b).d[0][0]));
    }
  }

  std::ostringstream csv;
  write_face_csv_header(csv);
  for (int i = 0; i < samples; ++i) {
    const double a = out_chart.a_lo + (out_chart.a_hi - out_chart.a_lo) * i / (samples - 1);
    write_face_csv_row(csv, face_second_form(out_chart, a), face_profile_hessian(out_chart, a));
  }

  CommandOut out;
  json cj = json::array();
  for (const auto& c : certs) cj.push_back(to_json(c));
  out.result = {{"dihedral_angle", angle}, {"eps", eps},         {"delta", delta}, {"eps_found", found},
                {"certificates", cj},      {"max_change_outside_windows", outside}};
  out.passed = found && outside == 0;
  for (const auto& c : certs) out.passed = out.passed && c.passed;
  out.csv = csv.str();
  return out;
}

CommandOut isotopy(Fields p) {
  EsphereParams ep;
  ep.R = p.num("R");
  ep.m = p.integer("m");
  ep.n = p.integer("n");
  ep.b1 = p.num("b1", kPi / 3);
  const double nu_lo = p.num("nu_lo", 1e-4), nu_hi = p.num("nu_hi", 0.05), nu_tol = p.num("nu_tol", 1e-4);
  const double threshold = p.num("threshold", 1e-6);
  const int samples = p.integer("samples", 201);
  Fields g = p.sub_or_empty("grid");
  const int lc = g.integer("lambda_count", 64), sc = g.integer("s_count", 256), depth = g.integer("depth", 2);
  g.finish();
  p.finish();
  if (!(0 < nu_lo && nu_lo < nu_hi && nu_hi < 1)) throw PreconditionError("need 0 < nu_lo < nu_hi < 1");
  if (!(nu_tol > 0)) throw PreconditionError("nu_tol must be positive");
  if (samples < 2) throw PreconditionError("samples must be at least 2");
  ep.nu = nu_lo;
  ep.validate();

  GridSpec grid;
  grid.axes = {{0, 1, lc}, {0, 1, sc}};
  grid.depth = depth;
  const auto search = search_stage1_nu(ep, grid, nu_lo, nu_hi, nu_tol);
  ep.nu = search.nu_star;
  const auto prof = make_esphere_profile(ep);
  const auto target = make_kandh_target(prof);
  const auto p1 = isotopy_stage1(prof, target);
  const auto p2 = isotopy_stage2(target.k1, target.h1, ep.m, ep.n);
  grid.axes[1] = {0, prof.T, sc};
  const auto c1 = p1.min_ricci(grid, threshold);
  grid.axes[0] = {1, 2, lc};
  const auto c2 = p2.min_ricci(grid, threshold);

  const auto end = p2.at(2);
  const double Rr = 2 * prof.T / kPi;
  double dev = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto c = sectional(end, prof.T * (i + 0.5) / 1000);
    for (double K : {c.K_sk, c.K_sh, c.K_kk, c.K_hh, c.K_kh}) dev = std::max(dev, std::abs(K - 1 / (ep.R * ep.R)));
  }

  Csv csv("s,k0,h0,k1,h1");
  for (int i = 0; i < samples; ++i) {
    const double s = prof.T * i / (samples - 1);
    csv.row({s, prof.k(s), prof.h(s), target.k1(s), target.h1(s)});
  }

  json trace = json::array();
  for (const auto& t : search.trace) trace.push_back({{"nu", t.nu}, {"built", t.built}, {"margin", t.margin}});
  CommandOut out;
  out.result = {{"nu_star", search.nu_star},
                {"nu_trace", trace},
                {"profile", to_json(prof)},
                {"target", {{"tau", target.tau},
                            {"s_k", target.s_k},
                            {"theta", target.theta},
                            {"j", target.j},
                            {"gamma", target.gamma},
                            {"conditions", to_json(target.conditions)}}},
                {"stage1", to_json(c1)},
                {"stage2", to_json(c2)},
                {"round_radius", Rr},
                {"round_end_max_deviation", dev}};
  out.passed = c1.passed && c2.passed && dev < 1e-8;
  out.csv = csv.str();
  return out;
}

MetricPath path_field(Fields f) {
  const std::string kind = f.str("kind", "");
  if (kind == "round_radius") {
    const int dim = f.integer("dim");
    Jet3Curve r = curve_field(f, "r");
    f.finish();
    return MetricPath::round_radius(dim, std::move(r));
  }
  if (kind == "warped_affine") {
    auto a = metric_field(f.sub("start"));
    auto b = metric_field(f.sub("end"));
    const double l0 = f.num("lam0", 0), l1 = f.num("lam1", 1);
    f.finish();
    return MetricPath::warped_affine(std::move(a), std::move(b), l0, l1);
  }
  throw ParseError(f.at("kind") + ": expected round_radius or warped_affine");
}

CommandOut concordance(Fields p) {
  const MetricPath path = path_field(p.sub("path"));
  const double nu = p.num("nu");
  const int samples = p.integer("samples", 201);
  ConcordanceOptions opt;
  Fields o = p.sub_or_empty("options");
  opt.path_grid = GridSpec::line(0, 1, o.integer("path_count", 65), o.integer("path_depth", 2));
  opt.u_count = o.integer("u_count", opt.u_count);
  opt.u_depth = o.integer("u_depth", opt.u_depth);
  opt.max_iterations = o.integer("max_iterations", opt.max_iterations);
  opt.threshold = o.num("threshold", opt.threshold);
  opt.spot_checks = o.integer("spot_checks", opt.spot_checks);
  opt.seed = static_cast<unsigned>(o.integer("seed", static_cast<int>(opt.seed)));
  o.finish();
  p.finish();
  if (samples < 2) throw PreconditionError("samples must be at least 2");

  const auto res = concordance_search(path, nu, opt);
  const auto& cp = res.params;
  const auto sch = concordance_schedule(cp);
  const double t0 = cp.t0(), t1 = cp.t1(), alpha = 1 / cp.inv_alpha(), beta = 1 / cp.inv_beta();
  const double ends = std::max({std::abs(sch.lambda(t0)), std::abs(sch.lambda(t1) - 1),
                                std::abs(sch.rho(t0) / cp.r1 - 1), std::abs(sch.rho(t1) / cp.r0 - 1)});
  double ode = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = std::exp(cp.u0 + (cp.u1 - cp.u0) * i / 1000);
    const double G = gamma_fn(t);
    const Jet3 l = sch.lambda.eval_upto(t, 1), r = sch.rho.eval_upto(t, 1);
    ode = std::max({ode, std::abs(alpha * l.d1 - G) / G, std::abs(beta * r.d1 / r.value + G) / G});
  }

  Csv csv("u,time,space,mixed,theta_split");
  for (int i = 0; i < samples; ++i) {
    const double u = cp.u0 + (cp.u1 - cp.u0) * i / (samples - 1);
    const auto b = concordance_bounds(cp, path.dimension(), res.min_ric, u);
    csv.row({u, b.time, b.space, b.mixed, b.theta_split});
  }

  CommandOut out;
  out.result = to_json(res);
  out.result["schedule"] = {{"endpoint_residual", ends}, {"ode_relative_residual", ode}};
  out.passed = res.passed && ends < 1e-12 && ode < 1e-10;
  out.csv = csv.str();
  return out;
}

CommandOut triangle(Fields p) {
  const double r = p.num("r"), eta = p.num("eta", 0.25);
  const int samples = p.integer("samples", 101);
  p.finish();
  if (samples < 2) throw PreconditionError("samples must be at least 2");
  const auto s = solve_geodesic_triangle(r, eta);
  const double lim0 = triangle_at(r, 0, eta).sin_z, lim1 = triangle_at(r, 1, eta).sin_z;

  Csv csv("tau,theta0,theta_r,theta1,sin_z");
  for (int i = 0; i < samples; ++i) {
    const double tau = static_cast<double>(i) / (samples - 1);
    const auto e = triangle_at(r, tau, eta);
    csv.row({tau, kPi / 2 - eta * std::sin(kPi * tau), kPi - tau * kPi / 2, e.theta1, e.sin_z});
  }

  CommandOut out;
  out.result = to_json(s);
  out.result["limits"] = {{"sin_z_at_start", lim0}, {"sin_r", std::sin(r)}, {"sin_z_at_end", lim1}};
  out.passed = s.residual < 1e-10 && s.x1 > r && std::abs(lim0 - std::sin(r)) < 1e-6 && std::abs(lim1 - 1) < 1e-6;
  out.csv = csv.str();
  return out;
}

using Handler = CommandOut (*)(Fields);

Handler handler_for(const std::string& c) {
  if (c == "spline-demo") return spline_demo;
  if (c == "curvature") return curvature;
  if (c == "glue-corner") return glue_corner;
  if (c == "isotopy") return isotopy;
  if (c == "concordance") return concordance;
  if (c == "triangle") return triangle;
  return nullptr;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << text;
}

}  // namespace

const std::vector<std::string>& scenario_commands() {
  static const std::vector<std::string> c = {"spline-demo", "curvature", "glue-corner",
                                             "isotopy",     "concordance", "triangle"};
  return c;
}

RunResult run_scenario(const json& scenario, const RunOptions& opt) {
  RunResult rr;
  std::string command, report_name = "report.json", csv_name;
  const auto fail = [&](int code, const char* kind, const std::string& msg) {
    rr.exit_code = code;
    rr.report = {{"command", command}, {"passed", false}, {"error", {{"kind", kind}, {"message", msg}}}};
  };
  if (opt.threads > 0) verify::set_threads(opt.threads);
  if (opt.grid_depth >= 0) verify::set_depth_override(opt.grid_depth);
  try {
    Fields top(scenario, "scenario");
    command = top.str("command", "");
    const Handler h = handler_for(command);
    if (!h) throw ParseError(top.at("command") + ": unknown command '" + command + "'");
    csv_name = command + ".csv";
    Fields outs = top.sub_or_empty("outputs");
    report_name = outs.str("report", report_name);
    csv_name = outs.str("csv", csv_name);
    outs.finish();
    const json& params = top.need("params");
    top.finish();
    CommandOut out = h(Fields(params, "scenario.params"));
    rr.exit_code = out.passed ? 0 : 1;
    rr.report = {{"command", command}, {"passed", out.passed}, {"result", std::move(out.result)}};
    if (opt.write_files) {
      std::filesystem::create_directories(opt.out_dir);
      write_file(opt.out_dir / csv_name, out.csv);
      rr.files.push_back(opt.out_dir / csv_name);
    }
  } catch (const ParseError& e) {
    fail(2, "parse", e.what());
  } catch (const PreconditionError& e) {
    fail(3, "precondition", e.what());
  } catch (const Error& e) {
    fail(3, "error", e.what());
  }
  if (opt.grid_depth >= 0) verify::set_depth_override(-1);
  if (opt.write_files) {
    try {
      std::filesystem::create_directories(opt.out_dir);
      write_file(opt.out_dir / report_name, dump_json(rr.report));
      rr.files.push_back(opt.out_dir / report_name);
    } catch (const std::exception& e) {
      if (rr.exit_code == 0) fail(3, "io", e.what());
    }
  }
  return rr;
}

RunResult run_scenario_file(const std::filesystem::path& file, const RunOptions& opt) {
  std::ifstream is(file);
  if (!is) {
    RunResult rr;
    rr.exit_code = 2;
    rr.report = {{"passed", false}, {"error", {{"kind", "parse"}, {"message", "cannot open " + file.string()}}}};
    return rr;
  }
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    RunResult rr;
    rr.exit_code = 2;
    rr.report = {{"passed", false}, {"error", {{"kind", "parse"}, {"message", file.string() + ": " + e.what()}}}};
    return rr;
  }
  return run_scenario(j, opt);
}

}  // namespace wc
