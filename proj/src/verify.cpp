#include "wc/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "wc/jet.hpp"

namespace wc {

using nlohmann::json;

namespace {
std::atomic<int> g_threads{1};
std::atomic<int> g_depth{-1};

using Point = std::vector<double>;

// Evaluates f at every point; the result order matches pts regardless of threads.
std::vector<double> eval_all(const MarginFn& f, const std::vector<Point>& pts) {
  std::vector<double> out(pts.size());
  const int nt = std::max(1, std::min<int>(g_threads.load(), static_cast<int>(pts.size())));
  std::vector<std::exception_ptr> errs(nt);
  auto work = [&](int t) {
    try {
      for (size_t i = t; i < pts.size(); i += nt) {
        try {
          out[i] = f(pts[i]);
        } catch (const std::exception& e) {
          std::ostringstream os;
          os << e.what() << " [at (";
          for (size_t d = 0; d < pts[i].size(); ++d) os << (d ? ", " : "") << pts[i][d];
          os << ")]";
          throw Error(os.str());
        }
      }
    } catch (...) {
      errs[t] = std::current_exception();
    }
  };
  if (nt == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  for (size_t i = 0; i < out.size(); ++i)
    if (std::isnan(out[i])) throw Error("margin function returned NaN");
  return out;
}

}  // namespace

namespace verify {
void set_threads(int n) { g_threads = std::max(1, n); }
int threads() { return g_threads; }
void set_depth_override(int depth) { g_depth = depth; }
int depth_override() { return g_depth; }
}  // namespace verify

GridSpec GridSpec::line(double lo, double hi, int count, int depth, int factor) {
  return GridSpec{{Axis{lo, hi, count}}, depth, factor};
}

void GridSpec::validate() const {
  if (axes.empty()) throw PreconditionError("grid needs at least one axis");
  for (const auto& a : axes) {
    if (a.count < 2) throw PreconditionError("grid axis count must be >= 2");
    if (!(a.lo <= a.hi)) throw PreconditionError("grid axis needs lo <= hi");
  }
  if (depth < 0) throw PreconditionError("grid depth must be >= 0");
  if (factor < 2) throw PreconditionError("grid refinement factor must be >= 2");
}

PositivityCertificate grid_min(const MarginFn& f, const GridSpec& grid_in, double threshold,
                               std::string quantity_id) {
  GridSpec grid = grid_in;
  if (verify::depth_override() >= 0) grid.depth = verify::depth_override();
  grid.validate();
  const size_t dim = grid.axes.size();

  std::vector<Point> pts;
  std::vector<double> h(dim);
  for (size_t d = 0; d < dim; ++d) h[d] = (grid.axes[d].hi - grid.axes[d].lo) / (grid.axes[d].count - 1);
  {
    size_t total = 1;
    for (const auto& a : grid.axes) total *= a.count;
    pts.reserve(total);
    std::vector<int> idx(dim, 0);
    for (size_t n = 0; n < total; ++n) {
      Point p(dim);
      for (size_t d = 0; d < dim; ++d)
        p[d] = idx[d] == grid.axes[d].count - 1 ? grid.axes[d].hi : grid.axes[d].lo + idx[d] * h[d];
      pts.push_back(std::move(p));
      for (size_t d = dim; d-- > 0;) {
        if (++idx[d] < grid.axes[d].count) break;
        idx[d] = 0;
      }
    }
  }
  std::vector<double> vals = eval_all(f, pts);

  PositivityCertificate cert;
  cert.quantity_id = std::move(quantity_id);
  cert.grid = grid;
  cert.threshold = threshold;
  cert.evaluations = static_cast<long>(vals.size());
  size_t best = 0;
  for (size_t i = 1; i < vals.size(); ++i)
    if (vals[i] < vals[best]) best = i;
  double best_val = vals[best];
  Point best_pt = pts[best];
  cert.refinement_trace.push_back({0, best_val});

  for (int level = 1; level <= grid.depth; ++level) {
    std::vector<size_t> order(vals.size());
    std::iota(order.begin(), order.end(), 0);
    const size_t keep = std::max<size_t>(1, (vals.size() + 19) / 20);
    std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                      [&](size_t a, size_t b) { return vals[a] < vals[b] || (vals[a] == vals[b] && a < b); });
    std::vector<double> hn(dim);
    for (size_t d = 0; d < dim; ++d) hn[d] = h[d] / grid.factor;
    std::vector<Point> next;
    const int span = grid.factor;
    for (size_t k = 0; k < keep; ++k) {
      const Point& c = pts[order[k]];
      const size_t per = static_cast<size_t>(std::pow(2 * span + 1, dim));
      std::vector<int> off(dim, -span);
      for (size_t n = 0; n < per; ++n) {
        Point p(dim);
        bool inside = true, centre = true;
        for (size_t d = 0; d < dim; ++d) {
          p[d] = c[d] + off[d] * hn[d];
          if (off[d] != 0) centre = false;
          if (p[d] < grid.axes[d].lo || p[d] > grid.axes[d].hi) inside = false;
        }
        if (inside && !centre) next.push_back(std::move(p));
        for (size_t d = dim; d-- > 0;) {
          if (++off[d] <= span) break;
          off[d] = -span;
        }
      }
    }
    std::vector<double> nv = next.empty() ? std::vector<double>{} : eval_all(f, next);
    cert.evaluations += static_cast<long>(nv.size());
    for (size_t i = 0; i < nv.size(); ++i)
      if (nv[i] < best_val) {
        best_val = nv[i];
        best_pt = next[i];
      }
    cert.refinement_trace.push_back({level, best_val});
    // keep the selected centres so each level refines around the current worst region
    for (size_t k = 0; k < keep; ++k) {
      next.push_back(pts[order[k]]);
      nv.push_back(vals[order[k]]);
    }
    pts = std::move(next);
    vals = std::move(nv);
    h = hn;
  }
  cert.min_margin = best_val;
  cert.argmin = best_pt;
  cert.passed = best_val > threshold;
  return cert;
}

double bisect_param(const std::function<bool(double)>& pred, double lo, double hi, double tol) {
  if (!(tol > 0)) throw PreconditionError("bisect_param: tol must be positive");
  bool plo = pred(lo), phi = pred(hi);
  if (plo == phi) throw PreconditionError("bisect_param: predicate agrees at both ends (no crossing)");
  while (std::abs(hi - lo) > tol) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid) == plo)
      lo = mid;
    else
      hi = mid;
  }
  return plo ? lo : hi;
}

json to_json(const GridSpec& g) {
  json axes = json::array();
  for (const auto& a : g.axes) axes.push_back({{"lo", a.lo}, {"hi", a.hi}, {"count", a.count}});
  return {{"axes", axes}, {"depth", g.depth}, {"factor", g.factor}};
}

json to_json(const PositivityCertificate& c) {
  json trace = json::array();
  for (const auto& [d, m] : c.refinement_trace) trace.push_back({{"depth", d}, {"min_margin", m}});
  return {{"quantity", c.quantity_id}, {"grid", to_json(c.grid)}, {"threshold", c.threshold},
          {"min_margin", c.min_margin}, {"argmin", c.argmin},     {"refinement_trace", trace},
          {"passed", c.passed},         {"evaluations", c.evaluations}};
}

namespace {
void emit(std::ostringstream& os, const json& j, int indent, int level) {
  const std::string pad(static_cast<size_t>(indent * (level + 1)), ' '), end(static_cast<size_t>(indent * level), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      size_t i = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        os << pad << json(it.key()).dump() << ": ";
        emit(os, it.value(), indent, level + 1);
        os << (i + 1 < j.size() ? ",\n" : "\n");
      }
      os << end << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
      if (flat) {
        os << "[";
        for (size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          emit(os, j[i], indent, level + 1);
        }
        os << "]";
        return;
      }
      os << "[\n";
      for (size_t i = 0; i < j.size(); ++i) {
        os << pad;
        emit(os, j[i], indent, level + 1);
        os << (i + 1 < j.size() ? ",\n" : "\n");
      }
      os << end << "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        os << (std::isnan(v) ? "\"nan\"" : v > 0 ? "\"inf\"" : "\"-inf\"");
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << buf;
      return;
    }
    default:
      os << j.dump();
  }
}
}  // namespace

std::string dump_json(const json& j, int indent) {
  std::ostringstream os;
  emit(os, j, indent, 0);
  os << "\n";
  return os.str();
}

}  // namespace wc
