#include "wc/jet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace wc {

using nlohmann::json;

double Jet3::operator[](int i) const {
  switch (i) {
    case 0: return value;
    case 1: return d1;
    case 2: return d2;
    default: return d3;
  }
}

bool Jet3::finite() const {
  return std::isfinite(value) && std::isfinite(d1) && std::isfinite(d2) && std::isfinite(d3);
}

Jet3 operator+(const Jet3& x, const Jet3& y) {
  return {x.value + y.value, x.d1 + y.d1, x.d2 + y.d2, x.d3 + y.d3};
}

Jet3 operator-(const Jet3& x, const Jet3& y) {
  return {x.value - y.value, x.d1 - y.d1, x.d2 - y.d2, x.d3 - y.d3};
}

Jet3 operator*(double c, const Jet3& x) { return {c * x.value, c * x.d1, c * x.d2, c * x.d3}; }

Jet3 operator*(const Jet3& f, const Jet3& g) {
  return {f.value * g.value, f.d1 * g.value + f.value * g.d1,
          f.d2 * g.value + 2 * f.d1 * g.d1 + f.value * g.d2,
          f.d3 * g.value + 3 * f.d2 * g.d1 + 3 * f.d1 * g.d2 + f.value * g.d3};
}

Jet3 compose(const Jet3& f, const Jet3& g) {
  return {f.value, f.d1 * g.d1, f.d2 * g.d1 * g.d1 + f.d1 * g.d2,
          f.d3 * g.d1 * g.d1 * g.d1 + 3 * f.d2 * g.d1 * g.d2 + f.d1 * g.d3};
}

namespace {

class Poly final : public Node {
 public:
  Poly(std::vector<double> c, double center) : c_(std::move(c)), center_(center) {}
  Jet3 eval(double x) const override {
    const double t = x - center_;
    double p0 = 0, p1 = 0, p2 = 0, p3 = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) {
      p3 = p3 * t + 3 * p2;
      p2 = p2 * t + 2 * p1;
      p1 = p1 * t + p0;
      p0 = p0 * t + *it;
    }
    return {p0, p1, p2, p3};
  }
  json to_json() const override { return {{"poly", {{"coeffs", c_}, {"center", center_}}}}; }

 private:
  std::vector<double> c_;
  double center_;
};

enum class Prim { cos, sin, exp, log };

class Elementary final : public Node {
 public:
  Elementary(Prim k, double a, double b, double c) : k_(k), a_(a), b_(b), c_(c) {}
  Jet3 eval(double x) const override {
    const double u = b_ * x + c_;
    const double b2 = b_ * b_, b3 = b2 * b_;
    switch (k_) {
      case Prim::cos: {
        const double cu = std::cos(u), su = std::sin(u);
        return {a_ * cu, -a_ * b_ * su, -a_ * b2 * cu, a_ * b3 * su};
      }
      case Prim::sin: {
        const double cu = std::cos(u), su = std::sin(u);
        return {a_ * su, a_ * b_ * cu, -a_ * b2 * su, -a_ * b3 * cu};
      }
      case Prim::exp: {
        const double e = a_ * std::exp(u);
        return {e, b_ * e, b2 * e, b3 * e};
      }
      case Prim::log: {
        if (!(u > 0)) throw DomainError("log argument not positive at x=" + std::to_string(x));
        const double r = 1.0 / u;
        return {a_ * std::log(u), a_ * b_ * r, -a_ * b2 * r * r, 2 * a_ * b3 * r * r * r};
      }
    }
    return {};
  }
  json to_json() const override {
    static const char* names[] = {"cos", "sin", "exp", "log"};
    return {{names[static_cast<int>(k_)], {a_, b_, c_}}};
  }

 private:
  Prim k_;
  double a_, b_, c_;
};

class Power final : public Node {
 public:
  Power(double a, double p, double b, double c) : a_(a), p_(p), b_(b), c_(c) {}
  Jet3 eval(double x) const override {
    const double u = b_ * x + c_;
    if (!(u > 0) && p_ != std::floor(p_))
      throw DomainError("pow base not positive at x=" + std::to_string(x));
    const double q = p_;
    const double v0 = std::pow(u, q), v1 = q * std::pow(u, q - 1), v2 = q * (q - 1) * std::pow(u, q - 2),
                 v3 = q * (q - 1) * (q - 2) * std::pow(u, q - 3);
    return {a_ * v0, a_ * b_ * v1, a_ * b_ * b_ * v2, a_ * b_ * b_ * b_ * v3};
  }
  json to_json() const override { return {{"pow", {a_, p_, b_, c_}}}; }

 private:
  double a_, p_, b_, c_;
};

class Sum final : public Node {
 public:
  explicit Sum(std::vector<Expr> t) : t_(std::move(t)) {}
  Jet3 eval(double x) const override {
    Jet3 r;
    for (const auto& e : t_) r = r + e->eval(x);
    return r;
  }
  json to_json() const override {
    json a = json::array();
    for (const auto& e : t_) a.push_back(e->to_json());
    return {{"sum", a}};
  }

 private:
  std::vector<Expr> t_;
};

class Scale final : public Node {
 public:
  Scale(double w, Expr e) : w_(w), e_(std::move(e)) {}
  Jet3 eval(double x) const override { return w_ * e_->eval(x); }
  json to_json() const override { return {{"scale", {w_, e_->to_json()}}}; }

 private:
  double w_;
  Expr e_;
};

class Product final : public Node {
 public:
  Product(Expr f, Expr g) : f_(std::move(f)), g_(std::move(g)) {}
  Jet3 eval(double x) const override { return f_->eval(x) * g_->eval(x); }
  json to_json() const override { return {{"product", {f_->to_json(), g_->to_json()}}}; }

 private:
  Expr f_, g_;
};

class Compose final : public Node {
 public:
  Compose(Expr f, Expr g) : f_(std::move(f)), g_(std::move(g)) {}
  Jet3 eval(double x) const override {
    const Jet3 gi = g_->eval(x);
    return compose(f_->eval(gi.value), gi);
  }
  json to_json() const override { return {{"compose", {f_->to_json(), g_->to_json()}}}; }

 private:
  Expr f_, g_;
};

std::array<double, 3> triple(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected [a, b, c]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

namespace ex {

Expr constant(double c) { return std::make_shared<Poly>(std::vector<double>{c}, 0.0); }
Expr identity() { return std::make_shared<Poly>(std::vector<double>{0.0, 1.0}, 0.0); }
Expr poly(std::vector<double> coeffs, double center) {
  return std::make_shared<Poly>(std::move(coeffs), center);
}
Expr cos(double a, double b, double c) { return std::make_shared<Elementary>(Prim::cos, a, b, c); }
Expr sin(double a, double b, double c) { return std::make_shared<Elementary>(Prim::sin, a, b, c); }
Expr exp(double a, double b, double c) { return std::make_shared<Elementary>(Prim::exp, a, b, c); }
Expr log(double a, double b, double c) { return std::make_shared<Elementary>(Prim::log, a, b, c); }
Expr pow(double a, double p, double b, double c) { return std::make_shared<Power>(a, p, b, c); }
Expr sum(std::vector<Expr> terms) { return std::make_shared<Sum>(std::move(terms)); }
Expr scale(double w, Expr e) { return std::make_shared<Scale>(w, std::move(e)); }
Expr product(Expr f, Expr g) { return std::make_shared<Product>(std::move(f), std::move(g)); }
Expr compose(Expr outer, Expr inner) { return std::make_shared<Compose>(std::move(outer), std::move(inner)); }

Expr from_json(const json& j) {
  if (j.is_number()) return constant(j.get<double>());
  if (!j.is_object() || j.size() != 1) throw ParseError("expression must be a number or a single-key object");
  const auto& [key, v] = *j.items().begin();
  try {
    if (key == "poly") {
      for (const auto& [k, _] : v.items())
        if (k != "coeffs" && k != "center") throw ParseError("poly: unknown key '" + k + "'");
      return poly(v.at("coeffs").get<std::vector<double>>(), v.value("center", 0.0));
    }
    if (key == "cos" || key == "sin" || key == "exp" || key == "log") {
      auto [a, b, c] = triple(v);
      if (key == "cos") return cos(a, b, c);
      if (key == "sin") return sin(a, b, c);
      if (key == "exp") return exp(a, b, c);
      return log(a, b, c);
    }
    if (key == "pow") {
      if (!v.is_array() || v.size() != 4) throw ParseError("pow expects [a, p, b, c]");
      return pow(v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>());
    }
    if (key == "sum") {
      std::vector<Expr> t;
      for (const auto& e : v) t.push_back(from_json(e));
      return sum(std::move(t));
    }
    if (key == "scale") {
      if (!v.is_array() || v.size() != 2) throw ParseError("scale expects [w, expr]");
      return scale(v[0].get<double>(), from_json(v[1]));
    }
    if (key == "product" || key == "compose") {
      if (!v.is_array() || v.size() != 2) throw ParseError(key + " expects [expr, expr]");
      return key == "product" ? product(from_json(v[0]), from_json(v[1]))
                              : compose(from_json(v[0]), from_json(v[1]));
    }
  } catch (const json::exception& e) {
    throw ParseError(key + ": " + e.what());
  }
  throw ParseError("unknown primitive '" + key + "'");
}

}  // namespace ex

int jet_mismatch_order(const Jet3& l, const Jet3& r, double rtol) {
  for (int i = 0; i < 4; ++i) {
    const double s = 1 + std::abs(l[i]) + std::abs(r[i]);
    if (std::abs(l[i] - r[i]) > rtol * s) return i;
  }
  return kSmooth;
}

Jet3Curve::Jet3Curve(Expr f, double lo, double hi) : pieces_{{lo, hi, std::move(f)}} {
  if (!(lo < hi)) throw PreconditionError("curve domain must satisfy lo < hi");
}

Jet3Curve::Jet3Curve(std::vector<Piece> pieces, std::vector<int> orders)
    : pieces_(std::move(pieces)), orders_(std::move(orders)) {
  if (pieces_.empty()) throw PreconditionError("curve needs at least one piece");
  if (orders_.size() + 1 != pieces_.size()) throw PreconditionError("one continuity order per breakpoint");
  for (size_t i = 0; i < pieces_.size(); ++i) {
    if (!(pieces_[i].lo < pieces_[i].hi)) throw PreconditionError("empty curve piece");
    if (i && pieces_[i].lo != pieces_[i - 1].hi) throw PreconditionError("curve pieces must tile the domain");
  }
}

std::vector<Kink> Jet3Curve::kinks() const {
  std::vector<Kink> out;
  for (size_t i = 0; i < orders_.size(); ++i)
    if (orders_[i] < kSmooth) out.push_back({pieces_[i].hi, orders_[i]});
  return out;
}

int Jet3Curve::continuity_at(double x) const {
  for (size_t i = 0; i < orders_.size(); ++i)
    if (pieces_[i].hi == x) return orders_[i];
  return kSmooth;
}

const Jet3Curve::Piece& Jet3Curve::piece_for(double x, Side side) const {
  if (!(x >= lo() && x <= hi()))
    throw DomainError("point " + std::to_string(x) + " outside curve domain [" + std::to_string(lo()) + ", " +
                      std::to_string(hi()) + "]");
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), x, [](double v, const Piece& p) { return v < p.hi; });
  if (it == pieces_.end()) return pieces_.back();
  // x lies in [it->lo, it->hi); at a breakpoint it->lo == x and the left piece is it-1
  if (x == it->lo && it != pieces_.begin() && side == Side::left) return *(it - 1);
  return *it;
}

Jet3 Jet3Curve::eval(double x, Side side) const {
  if (side == Side::none && continuity_at(x) < kSmooth)
    throw DomainError("full jet requested at kink x=" + std::to_string(x) + " without a side");
  return piece_for(x, side).f->eval(x);
}

Jet3 Jet3Curve::eval_upto(double x, int max_order) const {
  if (continuity_at(x) <= max_order)
    throw DomainError("order-" + std::to_string(max_order) + " jet requested at kink x=" + std::to_string(x));
  return piece_for(x, Side::right).f->eval(x);
}

Jet3Curve Jet3Curve::splice(double a, double b, Expr g) const {
  if (!(a >= lo() && b <= hi() && a < b)) throw DomainError("splice window outside curve domain");
  std::vector<Piece> ps;
  std::vector<int> ord;
  for (size_t i = 0; i < pieces_.size(); ++i) {
    const auto& p = pieces_[i];
    if (p.hi <= a) {
      ps.push_back(p);
      if (i + 1 < pieces_.size() && p.hi < a) ord.push_back(orders_[i]);
    } else if (p.lo < a) {
      ps.push_back({p.lo, a, p.f});
    }
  }
  if (!ps.empty()) ord.push_back(jet_mismatch_order(ps.back().f->eval(a), g->eval(a)));
  ps.push_back({a, b, g});
  bool first_right = true;
  for (size_t i = 0; i < pieces_.size(); ++i) {
    const auto& p = pieces_[i];
    if (p.hi <= b) continue;
    const double l = std::max(p.lo, b);
    if (first_right) {
      ord.push_back(jet_mismatch_order(g->eval(b), p.f->eval(b)));
      first_right = false;
    } else {
      ord.push_back(orders_[i - 1]);
    }
    ps.push_back({l, p.hi, p.f});
  }
  return Jet3Curve(std::move(ps), std::move(ord));
}

json Jet3Curve::to_json() const {
  json ps = json::array();
  for (const auto& p : pieces_) ps.push_back({{"range", {p.lo, p.hi}}, {"expr", p.f->to_json()}});
  return {{"pieces", ps}, {"continuity", orders_}};
}

Jet3Curve Jet3Curve::from_json(const json& j) {
  if (!j.is_object()) throw ParseError("curve must be an object");
  for (const auto& [k, _] : j.items())
    if (k != "pieces" && k != "continuity" && k != "expr" && k != "domain")
      throw ParseError("curve: unknown key '" + k + "'");
  try {
    if (j.contains("expr")) {
      const auto d = j.at("domain").get<std::vector<double>>();
      if (d.size() != 2) throw ParseError("domain expects [lo, hi]");
      return Jet3Curve(ex::from_json(j.at("expr")), d[0], d[1]);
    }
    std::vector<Piece> ps;
    for (const auto& p : j.at("pieces")) {
      const auto r = p.at("range").get<std::vector<double>>();
      if (r.size() != 2) throw ParseError("range expects [lo, hi]");
      ps.push_back({r[0], r[1], ex::from_json(p.at("expr"))});
    }
    std::vector<int> ord;
    if (j.contains("continuity")) {
      ord = j.at("continuity").get<std::vector<int>>();
    } else {
      for (size_t i = 1; i < ps.size(); ++i)
        ord.push_back(jet_mismatch_order(ps[i - 1].f->eval(ps[i].lo), ps[i].f->eval(ps[i].lo)));
    }
    return Jet3Curve(std::move(ps), std::move(ord));
  } catch (const json::exception& e) {
    throw ParseError(std::string("curve: ") + e.what());
  } catch (const PreconditionError& e) {
    throw ParseError(std::string("curve: ") + e.what());
  }
}

Jet3 eval_jet(const Jet3Curve& c, double x) { return c.eval(x); }
Jet3 eval_left(const Jet3Curve& c, double x) { return c.eval(x, Side::left); }
Jet3 eval_right(const Jet3Curve& c, double x) { return c.eval(x, Side::right); }

Jet3Curve affine_combine(const Jet3Curve& c1, const Jet3Curve& c2, double w) {
  if (c1.lo() != c2.lo() || c1.hi() != c2.hi()) throw DomainError("affine_combine: domain mismatch");
  std::set<double> cuts{c1.lo(), c1.hi()};
  for (const auto& p : c1.pieces()) cuts.insert(p.hi);
  for (const auto& p : c2.pieces()) cuts.insert(p.hi);
  std::vector<double> xs(cuts.begin(), cuts.end());
  std::vector<Jet3Curve::Piece> ps;
  std::vector<int> ord;
  const auto pick = [](const Jet3Curve& c, double mid) -> const Expr& {
    for (const auto& p : c.pieces())
      if (mid >= p.lo && mid <= p.hi) return p.f;
    return c.pieces().back().f;
  };
  for (size_t i = 0; i + 1 < xs.size(); ++i) {
    const double mid = 0.5 * (xs[i] + xs[i + 1]);
    ps.push_back({xs[i], xs[i + 1],
                  ex::sum({ex::scale(1 - w, pick(c1, mid)), ex::scale(w, pick(c2, mid))})});
    if (i) ord.push_back(std::min(c1.continuity_at(xs[i]), c2.continuity_at(xs[i])));
  }
  return Jet3Curve(std::move(ps), std::move(ord));
}

}  // namespace wc
