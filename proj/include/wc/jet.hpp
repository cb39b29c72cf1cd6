#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace wc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Input violates a documented precondition.
struct PreconditionError : Error {
  using Error::Error;
};
struct DomainError : PreconditionError {
  using PreconditionError::PreconditionError;
};
struct ParseError : Error {
  using Error::Error;
};

struct Jet3 {
  double value = 0, d1 = 0, d2 = 0, d3 = 0;

  double operator[](int i) const;
  bool finite() const;
};

Jet3 operator+(const Jet3& x, const Jet3& y);
Jet3 operator-(const Jet3& x, const Jet3& y);
Jet3 operator*(double c, const Jet3& x);
Jet3 operator*(const Jet3& x, const Jet3& y);
// Chain rule: f evaluated at g.value, composed with g.
Jet3 compose(const Jet3& f, const Jet3& g);

struct BiJet {
  double value = 0, da = 0, db = 0, daa = 0, dab = 0, dbb = 0;
};

class Node;
using Expr = std::shared_ptr<const Node>;

class Node {
 public:
  virtual ~Node() = default;
  virtual Jet3 eval(double x) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

namespace ex {
Expr constant(double c);
Expr identity();
// sum_i c_i (x - center)^i
Expr poly(std::vector<double> coeffs, double center = 0.0);
Expr cos(double a, double b, double c);  // a cos(bx + c)
Expr sin(double a, double b, double c);  // a sin(bx + c)
Expr exp(double a, double b, double c);  // a exp(bx + c)
Expr log(double a, double b, double c);  // a ln(bx + c)
Expr pow(double a, double p, double b, double c);  // a (bx + c)^p
Expr sum(std::vector<Expr> terms);
Expr scale(double w, Expr e);
Expr product(Expr f, Expr g);
Expr compose(Expr outer, Expr inner);
Expr from_json(const nlohmann::json& j);
}  // namespace ex

enum class Side { none, left, right };

// Lowest discontinuous derivative order at a breakpoint; values >= 4 mean smooth.
constexpr int kSmooth = 4;

struct Kink {
  double x;
  int order;
};

class Jet3Curve {
 public:
  struct Piece {
    double lo, hi;
    Expr f;
  };

  Jet3Curve() = default;
  Jet3Curve(Expr f, double lo, double hi);
  // pieces must tile [pieces.front().lo, pieces.back().hi]; orders[i] is the
  // continuity at the breakpoint between pieces i and i+1.
  Jet3Curve(std::vector<Piece> pieces, std::vector<int> orders);

  double lo() const { return pieces_.front().lo; }
  double hi() const { return pieces_.back().hi; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  const std::vector<int>& orders() const { return orders_; }
  std::vector<Kink> kinks() const;
  // kSmooth unless x is a breakpoint.
  int continuity_at(double x) const;

  Jet3 eval(double x, Side side = Side::none) const;
  // Allowed at kinks whose discontinuous order exceeds max_order; entries
  // above max_order are taken from the right piece.
  Jet3 eval_upto(double x, int max_order) const;
  double operator()(double x) const { return eval_upto(x, 0).value; }

  // Replace [a, b] with a single piece g; continuity at a and b is measured.
  Jet3Curve splice(double a, double b, Expr g) const;

  nlohmann::json to_json() const;
  static Jet3Curve from_json(const nlohmann::json& j);

 private:
  std::vector<Piece> pieces_;
  std::vector<int> orders_;

  const Piece& piece_for(double x, Side side) const;
};

Jet3 eval_jet(const Jet3Curve& c, double x);
Jet3 eval_left(const Jet3Curve& c, double x);
Jet3 eval_right(const Jet3Curve& c, double x);

Jet3Curve affine_combine(const Jet3Curve& c1, const Jet3Curve& c2, double w);

// Lowest order at which two jets disagree beyond relative tolerance.
int jet_mismatch_order(const Jet3& l, const Jet3& r, double rtol = 1e-9);

}  // namespace wc
