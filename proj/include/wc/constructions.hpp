#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wc/jet.hpp"
#include "wc/verify.hpp"
#include "wc/warped.hpp"

namespace wc {

struct Condition {
  std::string id;
  double margin = 0;
  bool passed = false;
};

nlohmann::json to_json(const std::vector<Condition>& cs);
bool all_passed(const std::vector<Condition>& cs);
// Throws PreconditionError naming every failed condition.
void require_all(const std::vector<Condition>& cs, const std::string& what);

// f_nu(t) = 1 + nu * gain * q(t / (pi R / 3)), q(u) = u^4 ("quartic") or 3u^2 - u^4 ("concave_end")
struct HandleParams {
  double R = 2;
  double nu = 0.05;
  int m = 3, n = 3;
  double gain = 0;  // 0 selects the gain giving f_nu'(pi R/3) = 2 nu
  std::string shape = "quartic";

  double glue_point() const;
  std::vector<double> shape_coeffs() const;
  double effective_gain() const;
  Jet3Curve fnu() const;
  void validate() const;
};

DoublyWarpedMetric make_handle(const HandleParams& p);

struct EsphereParams {
  double R = 2;
  double nu = 0.05;
  double b1 = 0.5235987755982988;
  int m = 3, n = 3;
  double eps = 0;      // h window; 0 selects 0.175 R
  double delta = 0;    // 0 selects eps / 8
  double eps_k = 0;    // k window; 0 selects 0.025 R
  double delta_k = 0;  // 0 selects eps_k / 5
  double dock = 0;  // docking length; 0 selects max(pi R / 6, eps + delta + 1.2 k(glue))
  double gain = 0;
  std::string shape = "concave_end";
  double kappa = 8;         // docking band curvature in units of nu cos b1
  double close_tol = 1e-3;  // |h - R| <= close_tol * R after T2
  double tol = 1e-6;

  HandleParams handle() const;
  double dock_length() const;
  double eps_h() const;
  double delta_h() const;
  double eps_k_() const;
  double delta_k_() const;
  void validate() const;
};

struct EsphereProfile {
  EsphereParams params;
  Jet3Curve k, h;
  double T0 = 0, T1 = 0, T2 = 0, T3 = 0, T = 0;
  double glue = 0, eps = 0, delta = 0, eps_k = 0, delta_k = 0;
  // docking part: k = k(glue) + sigma y - kappa y^2 / 2 up to s_dock, then a knee reaching k'(T) = -1
  double sigma = 0, kappa = 0, s_dock = 0, knee_theta = 0;
  int knee_j = 0;
  std::vector<Condition> conditions;

  DoublyWarpedMetric metric() const;
};

std::vector<Condition> check_esphere(const EsphereProfile& p);
EsphereProfile make_esphere_profile(const EsphereParams& p);

struct KandHTarget {
  Jet3Curve k1, h1;
  double tau = 0, s_k = 0, theta = 0, gamma = 0;
  int j = 0;
  std::vector<Condition> conditions;
};

KandHTarget make_kandh_target(const EsphereProfile& p);
std::vector<Condition> check_kandh(const EsphereProfile& p, const Jet3Curve& k1, const Jet3Curve& h1);

// Either g_s = r(s)^2 ds_dim^2 for s in [0, 1], or the affine family between two
// doubly warped metrics a (at lam0) and b (at lam1).
class MetricPath {
 public:
  enum class Kind { round_radius, warped_affine };

  static MetricPath round_radius(int dim, Jet3Curve r);
  static MetricPath warped_affine(DoublyWarpedMetric a, DoublyWarpedMetric b, double lam0, double lam1);

  Kind kind() const { return kind_; }
  double lam0() const { return lam0_; }
  double lam1() const { return lam1_; }
  int dimension() const;
  const Jet3Curve& radius() const { return r_; }
  const DoublyWarpedMetric& start() const { return *a_; }
  const DoublyWarpedMetric& end() const { return *b_; }

  DoublyWarpedMetric at(double lambda) const;
  // Minimum Ricci eigenvalue of g_lambda over the grid, sampled on (lambda, s)
  // for warped paths and on lambda for round paths.
  PositivityCertificate min_ricci(const GridSpec& grid, double threshold = 1e-6) const;

 private:
  Kind kind_ = Kind::round_radius;
  int dim_ = 2;
  Jet3Curve r_;
  std::optional<DoublyWarpedMetric> a_, b_;
  double lam0_ = 0, lam1_ = 1;
};

MetricPath isotopy_stage1(const EsphereProfile& p, const KandHTarget& target);
// Affine path to the round metric of radius 2T/pi on [0, T].
MetricPath isotopy_stage2(const Jet3Curve& k1, const Jet3Curve& h1, int m, int n);
MetricPath round_path(double R, int m, int n);

struct NuTrial {
  double nu = 0;
  bool built = false;
  double margin = 0;
};

struct StageOneSearch {
  double nu_star = 0;
  std::vector<NuTrial> trace;
};

// Largest nu in [lo, hi] whose stage-1 path passes the Ricci certificate on grid;
// the s axis of grid is stretched to [0, T] for each profile.
StageOneSearch search_stage1_nu(EsphereParams base, const GridSpec& grid, double lo, double hi, double tol);

// Times are stored as logarithms so that large t0 stays representable.
struct ConcordanceParams {
  double u0 = 0, u1 = 0;  // ln t0, ln t1
  double r0 = 0, r1 = 0, nu = 0, C = 0;

  static ConcordanceParams from_times(double t0, double t1, double r0, double r1, double nu, double C);
  double t0() const;
  double t1() const;
  double L() const;
  double inv_alpha() const;
  double inv_beta() const;
  void validate() const;
};

struct Schedule {
  Jet3Curve rho, lambda;
};

// lambda(t) = (1/alpha)(1/ln t0 - 1/ln t), ln rho(t) = ln r1 - (1/beta)(1/ln t0 - 1/ln t)
Schedule concordance_schedule(const ConcordanceParams& p);
double gamma_fn(double t);

struct CEstimate {
  double second_form = 0;       // sup |II|
  double second_form_rate = 0;  // sup of |d/ds II(X,X)| and |d/ds of the shape operator|
  double mixed_ricci = 0;       // sup |Ric(X, d/ds)|
  double raw = 0;
  double C = 0;                 // 1.1 raw, floored at 1e-6
};

CEstimate estimate_C(const MetricPath& path, const GridSpec& grid);

// Scaled (by t^2) bound expressions at u = ln t.
struct ConcordanceBounds {
  double time = 0, space = 0, mixed = 0, theta_split = 0;
};
ConcordanceBounds concordance_bounds(const ConcordanceParams& p, int dim, double min_ric, double u);
// Largest theta with cos^2 n (L - C) - sin cos C / r0 > L - C.
double foiled_theta0(const ConcordanceParams& p, int dim);

struct SpotCheck {
  double u = 0;
  double ric_tt = 0, ric_yy = 0;            // t^2 Ric, finite differences in u
  double bound_tt = 0, bound_yy = 0;
};

struct ConcordanceResult {
  ConcordanceParams params;
  CEstimate C;
  double min_ric = 0;
  double theta0 = 0;
  int iterations = 0;
  std::vector<PositivityCertificate> certificates;
  std::vector<Condition> boundary;  // iso:00 .. iso:11
  double ln_R = 0;                  // ln(t0 r0 / r1)
  std::vector<std::pair<double, std::string>> trace;  // (u0, first failing bound)
  std::vector<SpotCheck> spot_checks;
  bool passed = false;
};

struct ConcordanceOptions {
  GridSpec path_grid = GridSpec::line(0, 1, 65, 2);
  int u_count = 257;
  int u_depth = 2;
  int max_iterations = 4096;
  double threshold = 1e-6;
  int spot_checks = 20;
  unsigned seed = 12345;
};

ConcordanceResult concordance_search(const MetricPath& path, double nu, const ConcordanceOptions& opt = {});
std::vector<SpotCheck> concordance_spot_check(const MetricPath& path, const ConcordanceParams& p, double min_ric,
                                              int count, unsigned seed);

struct TriangleSolution {
  double r = 0, tau = 0;
  double theta0 = 0, theta_r = 0, theta1 = 0;
  double z = 0, x1 = 0;
  double residual = 0;
};

struct TriangleEval {
  double theta1 = 0, sin_z = 0;
};

// theta0(tau) = pi/2 - eta sin(pi tau), theta_r(tau) = pi - tau pi / 2
TriangleEval triangle_at(double r, double tau, double eta = 0.25);
TriangleSolution solve_geodesic_triangle(double r, double eta = 0.25);

nlohmann::json to_json(const EsphereProfile& p);
nlohmann::json to_json(const ConcordanceResult& r);
nlohmann::json to_json(const TriangleSolution& t);

}  // namespace wc
