#pragma once
// Expression language for time/space dependent coefficients.
//
// Grammar (whitespace-insensitive):
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' int)?             integer exponents only
//   base   := number | 't' | 'x' | func '(' expr ')' | '(' expr ')'
//   func   := sin | cos | exp | jap | chi1 | chi2
//
// jap(u) = sqrt(1 + u^2).  The exponent integer may be signed and optionally
// parenthesized, e.g. jap(t)^(-3).  There is no unary minus; write 0-t.
//
// parse_expr throws ParseError (with byte offset) on malformed input; eval
// throws EvalError on division by zero, 0^negative, or any non-finite
// intermediate, naming the offending subexpression.  diff is exact: chi1 and
// chi2 differentiate to closed-form derivative nodes (printed chi1', chi1'',
// ... — diagnostic notation, not re-parseable; everything else round-trips).

#include <charconv>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "kglab/chi.hpp"

namespace kglab {

enum class Var { t, x };

struct ParseError : std::runtime_error {
  size_t offset;
  ParseError(const std::string& msg, size_t off)
      : std::runtime_error(msg + " (at byte " + std::to_string(off) + ")"),
        offset(off) {}
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace ast {

enum class Kind {
  Number, VarT, VarX, Add, Sub, Mul, Div, Pow,
  Sin, Cos, Exp, Jap, Chi1, Chi2,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Kind kind;
  double num = 0.0;   // Number
  int ipow = 0;       // Pow exponent
  int chi_order = 0;  // Chi1/Chi2 derivative order
  NodePtr a, b;
};

inline NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline NodePtr number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Number;
  n->num = v;
  return n;
}

inline bool is_const(const NodePtr& n, double v) {
  return n->kind == Kind::Number && n->num == v;
}

// Constructors with light constant folding so derivative trees stay small.
inline NodePtr add(NodePtr a, NodePtr b) {
  if (is_const(a, 0)) return b;
  if (is_const(b, 0)) return a;
  if (a->kind == Kind::Number && b->kind == Kind::Number)
    return number(a->num + b->num);
  return make(Kind::Add, std::move(a), std::move(b));
}

inline NodePtr sub(NodePtr a, NodePtr b) {
  if (is_const(b, 0)) return a;
  if (a->kind == Kind::Number && b->kind == Kind::Number)
    return number(a->num - b->num);
  return make(Kind::Sub, std::move(a), std::move(b));
}

inline NodePtr mul(NodePtr a, NodePtr b) {
  if (is_const(a, 0) || is_const(b, 0)) return number(0);
  if (is_const(a, 1)) return b;
  if (is_const(b, 1)) return a;
  if (a->kind == Kind::Number && b->kind == Kind::Number)
    return number(a->num * b->num);
  return make(Kind::Mul, std::move(a), std::move(b));
}

inline NodePtr div(NodePtr a, NodePtr b) {
  if (is_const(b, 1)) return a;
  if (is_const(a, 0) && !is_const(b, 0)) return number(0);
  return make(Kind::Div, std::move(a), std::move(b));
}

inline NodePtr pow(NodePtr a, int e) {
  if (e == 0) return number(1);
  if (e == 1) return a;
  auto n = std::make_shared<Node>();
  n->kind = Kind::Pow;
  n->ipow = e;
  n->a = std::move(a);
  return n;
}

inline NodePtr chi(Kind k, int order, NodePtr a) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->chi_order = order;
  n->a = std::move(a);
  return n;
}

std::string print(const NodePtr& n, int parent_prec = 0);

inline std::string print_num(double v) {
  if (v < 0) return "(0-" + print_num(-v) + ")";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string print(const NodePtr& n, int parent_prec) {
  auto wrap = [&](int prec, std::string s) {
    return prec < parent_prec ? "(" + std::move(s) + ")" : std::move(s);
  };
  auto chi_name = [](const Node& m) {
    std::string base = (m.kind == Kind::Chi1) ? "chi1" : "chi2";
    if (m.chi_order <= 3) return base + std::string(m.chi_order, '\'');
    return base + "^(" + std::to_string(m.chi_order) + ")";
  };
  switch (n->kind) {
    case Kind::Number: return print_num(n->num);
    case Kind::VarT: return "t";
    case Kind::VarX: return "x";
    case Kind::Add: return wrap(1, print(n->a, 1) + "+" + print(n->b, 1));
    case Kind::Sub: return wrap(1, print(n->a, 1) + "-" + print(n->b, 2));
    case Kind::Mul: return wrap(2, print(n->a, 2) + "*" + print(n->b, 2));
    case Kind::Div: return wrap(2, print(n->a, 2) + "/" + print(n->b, 3));
    case Kind::Pow: {
      std::string e = n->ipow < 0 ? "(" + std::to_string(n->ipow) + ")"
                                  : std::to_string(n->ipow);
      return wrap(3, print(n->a, 4) + "^" + e);
    }
    case Kind::Sin: return "sin(" + print(n->a) + ")";
    case Kind::Cos: return "cos(" + print(n->a) + ")";
    case Kind::Exp: return "exp(" + print(n->a) + ")";
    case Kind::Jap: return "jap(" + print(n->a) + ")";
    case Kind::Chi1:
    case Kind::Chi2: return chi_name(*n) + "(" + print(n->a) + ")";
  }
  return {};
}

[[noreturn]] inline void eval_fail(const char* what, const NodePtr& n) {
  throw EvalError(std::string(what) + " in subexpression: " + print(n));
}

inline double eval(const NodePtr& n, double t, double x) {
  switch (n->kind) {
    case Kind::Number: return n->num;
    case Kind::VarT: return t;
    case Kind::VarX: return x;
    case Kind::Add: {
      double r = eval(n->a, t, x) + eval(n->b, t, x);
      if (!std::isfinite(r)) eval_fail("non-finite value", n);
      return r;
    }
    case Kind::Sub: {
      double r = eval(n->a, t, x) - eval(n->b, t, x);
      if (!std::isfinite(r)) eval_fail("non-finite value", n);
      return r;
    }
    case Kind::Mul: {
      double r = eval(n->a, t, x) * eval(n->b, t, x);
      if (!std::isfinite(r)) eval_fail("non-finite value", n);
      return r;
    }
    case Kind::Div: {
      double d = eval(n->b, t, x);
      if (d == 0.0) eval_fail("division by zero", n);
      double r = eval(n->a, t, x) / d;
      if (!std::isfinite(r)) eval_fail("non-finite value", n);
      return r;
    }
    case Kind::Pow: {
      double base = eval(n->a, t, x);
      int e = n->ipow;
      if (base == 0.0 && e < 0) eval_fail("zero base with negative exponent", n);
      double p = base, r = 1.0;
      unsigned m = static_cast<unsigned>(e < 0 ? -static_cast<long>(e) : e);
      while (m) {
        if (m & 1u) r *= p;
        p *= p;
        m >>= 1u;
      }
      if (e < 0) r = 1.0 / r;
      if (!std::isfinite(r)) eval_fail("non-finite value", n);
      return r;
    }
    case Kind::Sin: return std::sin(eval(n->a, t, x));
    case Kind::Cos: return std::cos(eval(n->a, t, x));
    case Kind::Exp: {
      double r = std::exp(eval(n->a, t, x));
      if (!std::isfinite(r)) eval_fail("non-finite value", n);
      return r;
    }
    case Kind::Jap: {
      double u = eval(n->a, t, x);
      return std::sqrt(1.0 + u * u);
    }
    case Kind::Chi1: return chi1_deriv(n->chi_order, eval(n->a, t, x));
    case Kind::Chi2: return chi2_deriv(n->chi_order, eval(n->a, t, x));
  }
  eval_fail("corrupt node", n);
}

inline NodePtr diff(const NodePtr& n, Var v) {
  switch (n->kind) {
    case Kind::Number: return number(0);
    case Kind::VarT: return number(v == Var::t ? 1 : 0);
    case Kind::VarX: return number(v == Var::x ? 1 : 0);
    case Kind::Add: return add(diff(n->a, v), diff(n->b, v));
    case Kind::Sub: return sub(diff(n->a, v), diff(n->b, v));
    case Kind::Mul:
      return add(mul(diff(n->a, v), n->b), mul(n->a, diff(n->b, v)));
    case Kind::Div:
      return div(sub(mul(diff(n->a, v), n->b), mul(n->a, diff(n->b, v))),
                 pow(n->b, 2));
    case Kind::Pow:
      return mul(mul(number(n->ipow), pow(n->a, n->ipow - 1)), diff(n->a, v));
    case Kind::Sin: return mul(make(Kind::Cos, n->a), diff(n->a, v));
    case Kind::Cos:
      return mul(number(-1), mul(make(Kind::Sin, n->a), diff(n->a, v)));
    case Kind::Exp: return mul(make(Kind::Exp, n->a), diff(n->a, v));
    case Kind::Jap:
      return div(mul(n->a, diff(n->a, v)), make(Kind::Jap, n->a));
    case Kind::Chi1:
    case Kind::Chi2: {
      if (n->chi_order + 1 > kMaxChiDeriv)
        throw std::domain_error("cutoff derivative order exceeds " +
                                std::to_string(kMaxChiDeriv));
      return mul(chi(n->kind, n->chi_order + 1, n->a), diff(n->a, v));
    }
  }
  return number(0);
}

inline bool uses_var(const NodePtr& n, Var v) {
  if (!n) return false;
  if (n->kind == Kind::VarT) return v == Var::t;
  if (n->kind == Kind::VarX) return v == Var::x;
  return uses_var(n->a, v) || uses_var(n->b, v);
}

}  // namespace ast

class Expr {
 public:
  Expr() : root_(ast::number(0)) {}
  explicit Expr(ast::NodePtr root) : root_(std::move(root)) {}

  static Expr number(double v) { return Expr(ast::number(v)); }
  static Expr var(Var v) {
    return Expr(ast::make(v == Var::t ? ast::Kind::VarT : ast::Kind::VarX));
  }

  double eval(double t, double x) const { return ast::eval(root_, t, x); }
  Expr diff(Var v) const { return Expr(ast::diff(root_, v)); }
  std::string str() const { return ast::print(root_); }
  bool uses(Var v) const { return ast::uses_var(root_, v); }
  bool is_zero() const { return ast::is_const(root_, 0.0); }
  const ast::NodePtr& root() const { return root_; }

 private:
  ast::NodePtr root_;
};

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  ast::NodePtr parse() {
    auto e = expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  std::string_view s_;
  size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, pos_);
  }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' ||
                                s_[pos_] == '\n' || s_[pos_] == '\r'))
      ++pos_;
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  bool eat(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  ast::NodePtr expr() {
    auto e = term();
    for (;;) {
      if (eat('+')) e = ast::add(e, term());
      else if (eat('-')) e = ast::sub(e, term());
      else return e;
    }
  }

  ast::NodePtr term() {
    auto e = factor();
    for (;;) {
      if (eat('*')) e = ast::mul(e, factor());
      else if (eat('/')) e = ast::div(e, factor());
      else return e;
    }
  }

  ast::NodePtr factor() {
    auto b = base();
    if (eat('^')) return ast::pow(b, exponent());
    return b;
  }

  int exponent() {
    skip_ws();
    bool paren = eat('(');
    skip_ws();
    size_t start = pos_;
    if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
    size_t digits = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
    if (pos_ == digits) { pos_ = start; fail("expected integer exponent"); }
    int v = 0;
    auto [p, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (ec != std::errc() || p != s_.data() + pos_)
      { pos_ = start; fail("bad integer exponent"); }
    if (paren && !eat(')')) fail("expected ')' after exponent");
    return v;
  }

  ast::NodePtr base() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return num();
    if (std::isalpha(static_cast<unsigned char>(c))) return ident();
    if (c == '(') {
      ++pos_;
      auto e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  ast::NodePtr num() {
    double v = 0;
    auto [p, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc() || p == s_.data() + pos_) fail("malformed number");
    pos_ = static_cast<size_t>(p - s_.data());
    return ast::number(v);
  }

  ast::NodePtr ident() {
    size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_]))))
      ++pos_;
    std::string_view name = s_.substr(start, pos_ - start);
    if (name == "t") return ast::make(ast::Kind::VarT);
    if (name == "x") return ast::make(ast::Kind::VarX);
    ast::Kind k;
    if (name == "sin") k = ast::Kind::Sin;
    else if (name == "cos") k = ast::Kind::Cos;
    else if (name == "exp") k = ast::Kind::Exp;
    else if (name == "jap") k = ast::Kind::Jap;
    else if (name == "chi1") k = ast::Kind::Chi1;
    else if (name == "chi2") k = ast::Kind::Chi2;
    else {
      pos_ = start;
      fail("unknown identifier '" + std::string(name) + "'");
    }
    if (!eat('(')) fail("expected '(' after function name");
    auto arg = expr();
    if (!eat(')')) fail("expected ')'");
    if (k == ast::Kind::Chi1 || k == ast::Kind::Chi2)
      return ast::chi(k, 0, std::move(arg));
    return ast::make(k, std::move(arg));
  }
};

}  // namespace detail

inline Expr parse_expr(std::string_view src) {
  return Expr(detail::Parser(src).parse());
}

}  // namespace kglab
