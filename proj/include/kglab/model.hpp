#pragma once

// Phase-space model of a wave symbol on the cylinder R_t x S^1_x:
//
//     p(t, x, tau, xi) = tau^2 - xi^2 / g(x) + q(t, x, tau, xi),
//     q(t, x, tau, xi) = sum_{j+k <= 2} c_jk(t, x) tau^j xi^k,
//
// where g is a positive 2*pi-periodic metric coefficient and the
// perturbation coefficients c_jk are expected to decay in time like
// <t>^(-1-mu).  The module provides exact evaluation and differentiation
// of p, a small algebra of symbol functions with the Poisson bracket
//
//     {a, b} = da/dtau db/dt + da/dxi db/dx - da/dt db/dtau - da/dx db/dxi
//
// (so that d/ds b = {p, b} along the Hamilton flow of p), and scan-based
// checks of the structural hypotheses: metric positivity and periodicity,
// (1,1) signature of the fiber quadratic form, and weighted time decay of
// the perturbation coefficients.

#include "kglab/expr.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace kglab {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Wraps an angle into [0, 2*pi).
inline double wrap_angle(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

// A point of T*(R x S^1): time, position, and the dual frequencies.
struct PhasePoint {
  double t = 0.0;
  double x = 0.0;
  double tau = 0.0;
  double xi = 0.0;

  // Copy with x wrapped into [0, 2*pi), the canonical representative.
  PhasePoint normalized() const { return PhasePoint{t, wrap_angle(x), tau, xi}; }
};

// Gradient of a scalar on phase space, ordered (d/dt, d/dx, d/dtau, d/dxi).
struct Grad4 {
  double dt = 0.0;
  double dx = 0.0;
  double dtau = 0.0;
  double dxi = 0.0;
};

// A differentiable scalar on phase space: value plus exact gradient.
struct SymbolFn {
  std::function<double(const PhasePoint&)> value;
  std::function<Grad4(const PhasePoint&)> grad;
};

// Poisson bracket with the sign convention fixed above.
inline double poisson(const SymbolFn& a, const SymbolFn& b,
                      const PhasePoint& pt) {
  const Grad4 ga = a.grad(pt);
  const Grad4 gb = b.grad(pt);
  // grouped as paired differences so that {a, a} cancels exactly
  return (ga.dtau * gb.dt - ga.dt * gb.dtau) +
         (ga.dxi * gb.dx - ga.dx * gb.dxi);
}

inline SymbolFn operator+(const SymbolFn& a, const SymbolFn& b) {
  return SymbolFn{
      [a, b](const PhasePoint& pt) { return a.value(pt) + b.value(pt); },
      [a, b](const PhasePoint& pt) {
        const Grad4 ga = a.grad(pt);
        const Grad4 gb = b.grad(pt);
        return Grad4{ga.dt + gb.dt, ga.dx + gb.dx, ga.dtau + gb.dtau,
                     ga.dxi + gb.dxi};
      }};
}

inline SymbolFn operator*(double s, const SymbolFn& a) {
  return SymbolFn{[s, a](const PhasePoint& pt) { return s * a.value(pt); },
                  [s, a](const PhasePoint& pt) {
                    const Grad4 g = a.grad(pt);
                    return Grad4{s * g.dt, s * g.dx, s * g.dtau, s * g.dxi};
                  }};
}

// Product with the exact Leibniz gradient.
inline SymbolFn operator*(const SymbolFn& a, const SymbolFn& b) {
  return SymbolFn{
      [a, b](const PhasePoint& pt) { return a.value(pt) * b.value(pt); },
      [a, b](const PhasePoint& pt) {
        const double va = a.value(pt);
        const double vb = b.value(pt);
        const Grad4 ga = a.grad(pt);
        const Grad4 gb = b.grad(pt);
        return Grad4{ga.dt * vb + va * gb.dt, ga.dx * vb + va * gb.dx,
                     ga.dtau * vb + va * gb.dtau, ga.dxi * vb + va * gb.dxi};
      }};
}

// Metric coefficient g(x) on the circle, with its exact derivative.
class MetricS1 {
 public:
  MetricS1() : MetricS1(Expr::number(1.0)) {}
  explicit MetricS1(Expr g) : g_(std::move(g)), dg_(g_.diff(Var::x)) {}

  double value(double x) const { return g_.eval(0.0, x); }
  double inverse(double x) const { return 1.0 / value(x); }
  double deriv(double x) const { return dg_.eval(0.0, x); }

  const Expr& expr() const { return g_; }
  // 1/g as an expression (for exact higher derivatives downstream).
  Expr inverse_expr() const {
    return Expr(ast::div(ast::number(1.0), g_.root()));
  }

  bool x_only() const { return !g_.uses(Var::t); }
  double periodicity_defect() const {
    return std::fabs(value(0.0) - value(kTwoPi));
  }
  double grid_min(int n = 4096) const {
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) m = std::min(m, value(kTwoPi * k / n));
    return m;
  }

 private:
  Expr g_;
  Expr dg_;
};

// Fiber-quadratic perturbation q = sum c_jk(t,x) tau^j xi^k with its
// expected decay rate mu > 0.
struct FiberQuadratic {
  Expr c00, c10, c01, c20, c11, c02;  // all default to the zero expression
  double mu = 1.0;
};

// Result of the structural validation scans.
struct ValidationReport {
  bool evaluation_ok = true;  // false if any scan hit a non-finite value

  bool metric_uses_x_only = false;
  double metric_min = 0.0;                 // over a 4096-point x-grid
  double metric_periodicity_defect = 0.0;  // |g(0) - g(2*pi)|

  bool fiber_nondegenerate = false;
  double worst_discriminant = 0.0;  // min over samples of B^2 - 4AC
  double worst_t = 0.0, worst_x = 0.0;

  bool asymptotically_flat = false;
  double decay_constant = 0.0;   // weighted sup of |q| over 1 <= |t| <= 100
  double far_field_sup = 0.0;    // weighted sup of |q| at |t| = 1000
  double flatness_ratio = 0.0;   // far_field_sup / decay_constant

  bool pass() const {
    return evaluation_ok && metric_uses_x_only && metric_min > 0.0 &&
           metric_periodicity_defect <= 1e-12 && fiber_nondegenerate &&
           asymptotically_flat;
  }
};

// One row of the decay scan: a monomial coefficient c_jk differentiated
// (dt_order, dx_order) times, with weighted suprema per |t| decade.
struct DecayEntry {
  int monomial_j = 0, monomial_k = 0;
  int dt_order = 0, dx_order = 0;
  double sup_weighted = 0.0;            // global sup of <t>^(1+mu) |d^a c|
  std::array<double, 3> decade_sup{};   // |t| in [1,10], [10,100], [100,1000]
  bool non_increasing = false;
};

struct DecayReport {
  std::vector<DecayEntry> entries;
  bool pass = false;  // all suprema finite and non-increasing across decades
};

struct DecaySampleSpec {
  int per_decade = 32;  // log-spaced |t| samples per decade, each sign
  int n_x = 64;         // uniform x samples
};

class SpacetimeModel {
 public:
  SpacetimeModel() : SpacetimeModel(MetricS1(), FiberQuadratic{}) {}
  SpacetimeModel(MetricS1 metric, FiberQuadratic q)
      : metric_(std::move(metric)), mu_(q.mu) {
    c_ = {std::move(q.c00), std::move(q.c10), std::move(q.c01),
          std::move(q.c20), std::move(q.c11), std::move(q.c02)};
    for (int i = 0; i < 6; ++i) {
      dt_c_[i] = c_[i].diff(Var::t);
      dx_c_[i] = c_[i].diff(Var::x);
    }
  }

  const MetricS1& metric() const { return metric_; }
  double mu() const { return mu_; }
  const Expr& coeff(int j, int k) const { return c_[index_of(j, k)]; }

  // Exponent table for the monomials, ordered like fiber_coeff_values.
  static constexpr std::array<std::pair<int, int>, 6> monomials() {
    return {{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}}};
  }

  // Values of (c00, c10, c01, c20, c11, c02) at a base point.
  std::array<double, 6> fiber_coeff_values(double t, double x) const {
    const double xw = wrap_angle(x);
    std::array<double, 6> v{};
    for (int i = 0; i < 6; ++i) v[i] = c_[i].eval(t, xw);
    return v;
  }

  double q0(double x, double xi) const {
    return xi * xi * metric_.inverse(wrap_angle(x));
  }

  double q_value(const PhasePoint& pt) const {
    const auto c = fiber_coeff_values(pt.t, pt.x);
    return fiber_poly(c, pt.tau, pt.xi);
  }

  double eval_p(const PhasePoint& pt) const {
    const double v = pt.tau * pt.tau - q0(pt.x, pt.xi) + q_value(pt);
    if (!std::isfinite(v))
      throw EvalError("symbol evaluation produced a non-finite value");
    return v;
  }

  Grad4 grad_p(const PhasePoint& pt) const {
    const double xw = wrap_angle(pt.x);
    const double g = metric_.value(xw);
    const double dg = metric_.deriv(xw);
    const auto c = fiber_coeff_values(pt.t, xw);
    Grad4 r;
    r.dt = 0.0;
    r.dx = pt.xi * pt.xi * dg / (g * g);
    for (int i = 0; i < 6; ++i) {
      const auto [j, k] = monomials()[i];
      const double mono = ipow(pt.tau, j) * ipow(pt.xi, k);
      r.dt += dt_c_[i].eval(pt.t, xw) * mono;
      r.dx += dx_c_[i].eval(pt.t, xw) * mono;
    }
    r.dtau = 2.0 * pt.tau + c[1] + 2.0 * c[3] * pt.tau + c[4] * pt.xi;
    r.dxi = -2.0 * pt.xi / g + c[2] + c[4] * pt.tau + 2.0 * c[5] * pt.xi;
    if (!std::isfinite(r.dt) || !std::isfinite(r.dx) ||
        !std::isfinite(r.dtau) || !std::isfinite(r.dxi))
      throw EvalError("symbol gradient produced a non-finite value");
    return r;
  }

  // The full symbol p as a SymbolFn (value + exact gradient).
  SymbolFn symbol_p() const {
    const SpacetimeModel m = *this;
    return SymbolFn{[m](const PhasePoint& pt) { return m.eval_p(pt); },
                    [m](const PhasePoint& pt) { return m.grad_p(pt); }};
  }

  // tau^2 + q: the time part of p with the spatial form q0 removed.
  SymbolFn symbol_tau2_plus_q() const {
    const SpacetimeModel m = *this;
    return SymbolFn{
        [m](const PhasePoint& pt) {
          return pt.tau * pt.tau + m.q_value(pt);
        },
        [m](const PhasePoint& pt) {
          Grad4 r = m.grad_p(pt);
          // remove the q0 contributions: q0 depends on (x, xi) only
          const double xw = wrap_angle(pt.x);
          const double g = m.metric_.value(xw);
          const double dg = m.metric_.deriv(xw);
          r.dx -= pt.xi * pt.xi * dg / (g * g);
          r.dxi += 2.0 * pt.xi / g;
          return r;
        }};
  }

  // Structural scans: metric validity, fiber signature, far-field decay.
  ValidationReport validate() const {
    ValidationReport r;
    r.metric_uses_x_only = metric_.x_only();
    try {
      r.metric_min = metric_.grid_min();
      r.metric_periodicity_defect = metric_.periodicity_defect();
      scan_nondegeneracy(r);
      scan_flatness(r);
    } catch (const EvalError&) {
      r.evaluation_ok = false;
    }
    return r;
  }

  // Weighted decay scan of all coefficient derivatives up to max_order.
  DecayReport check_decay(int max_order,
                          const DecaySampleSpec& spec = {}) const {
    DecayReport report;
    const double w_exp = 1.0 + mu_;
    for (int i = 0; i < 6; ++i) {
      const auto [mj, mk] = monomials()[i];
      // table of d_t^a d_x^b c_i, built by exact differentiation
      std::vector<std::vector<Expr>> d(max_order + 1);
      for (int a = 0; a <= max_order; ++a) {
        d[a].resize(max_order - a + 1);
        for (int b = 0; b <= max_order - a; ++b) {
          if (a == 0 && b == 0)
            d[a][b] = c_[i];
          else if (b == 0)
            d[a][b] = d[a - 1][0].diff(Var::t);
          else
            d[a][b] = d[a][b - 1].diff(Var::x);
        }
      }
      for (int a = 0; a <= max_order; ++a) {
        for (int b = 0; b <= max_order - a; ++b) {
          DecayEntry e;
          e.monomial_j = mj;
          e.monomial_k = mk;
          e.dt_order = a;
          e.dx_order = b;
          for (int dec = 0; dec < 3; ++dec) {
            double sup = 0.0;
            const double lo = std::pow(10.0, dec);
            for (int s = 0; s <= spec.per_decade; ++s) {
              const double at =
                  lo * std::pow(10.0, double(s) / spec.per_decade);
              for (int sign = 0; sign < 2; ++sign) {
                const double t = sign ? -at : at;
                const double w = std::pow(1.0 + t * t, 0.5 * w_exp);
                for (int ix = 0; ix < spec.n_x; ++ix) {
                  const double x = kTwoPi * ix / spec.n_x;
                  double v;
                  try {
                    v = w * std::fabs(d[a][b].eval(t, x));
                  } catch (const EvalError&) {
                    v = std::numeric_limits<double>::infinity();
                  }
                  sup = std::max(sup, v);
                }
              }
            }
            e.decade_sup[dec] = sup;
          }
          e.sup_weighted = std::max(
              {e.decade_sup[0], e.decade_sup[1], e.decade_sup[2]});
          e.non_increasing =
              e.decade_sup[1] <= e.decade_sup[0] * (1.0 + 1e-9) + 1e-12 &&
              e.decade_sup[2] <= e.decade_sup[1] * (1.0 + 1e-9) + 1e-12;
          report.entries.push_back(std::move(e));
        }
      }
    }
    report.pass = true;
    for (const auto& e : report.entries)
      report.pass = report.pass && std::isfinite(e.sup_weighted) &&
                    e.non_increasing;
    return report;
  }

 private:
  static int index_of(int j, int k) {
    const auto mono = monomials();
    for (int i = 0; i < 6; ++i)
      if (mono[i].first == j && mono[i].second == k) return i;
    throw std::invalid_argument("no such fiber monomial");
  }

  static double ipow(double v, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= v;
    return r;
  }

  static double fiber_poly(const std::array<double, 6>& c, double tau,
                           double xi) {
    return c[0] + c[1] * tau + c[2] * xi + c[3] * tau * tau +
           c[4] * tau * xi + c[5] * xi * xi;
  }

  // Discriminant of the fiber quadratic form
  //   (1 + c20) tau^2 + c11 tau xi + (c02 - 1/g) xi^2;
  // positive iff the form has signature (1,1).
  double fiber_discriminant(double t, double x) const {
    const auto c = fiber_coeff_values(t, x);
    const double A = 1.0 + c[3];
    const double B = c[4];
    const double C = c[5] - metric_.inverse(wrap_angle(x));
    return B * B - 4.0 * A * C;
  }

  void scan_nondegeneracy(ValidationReport& r) const {
    // |t| on a log grid over [1, 1e3] plus t = 0, both signs; 64 x-points
    std::vector<double> ts{0.0};
    const int per = 16;
    for (int s = 0; s <= 3 * per; ++s) {
      const double at = std::pow(10.0, double(s) / per);
      ts.push_back(at);
      ts.push_back(-at);
    }
    double worst = std::numeric_limits<double>::infinity();
    double wt = 0.0, wx = 0.0;
    for (double t : ts) {
      for (int ix = 0; ix < 64; ++ix) {
        const double x = kTwoPi * ix / 64;
        const double disc = fiber_discriminant(t, x);
        if (disc < worst) {
          worst = disc;
          wt = t;
          wx = x;
        }
      }
    }
    r.worst_discriminant = worst;
    r.worst_t = wt;
    r.worst_x = wx;
    r.fiber_nondegenerate = worst > 0.0;
  }

  void scan_flatness(ValidationReport& r) const {
    // weighted size of q: <t>^(1+mu) |q| / (1 + tau^2 + xi^2); the
    // constant is estimated over 1 <= |t| <= 100 and must bound the
    // |t| = 1000 samples within a factor of 2
    static constexpr std::array<std::pair<double, double>, 7> fiber = {
        {{0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}, {2.0, 1.0},
         {1.0, 2.0}, {-1.0, 1.0}, {-2.0, 1.0}}};
    auto weighted = [&](double t) {
      double sup = 0.0;
      const double w = std::pow(1.0 + t * t, 0.5 * (1.0 + mu_));
      for (int ix = 0; ix < 16; ++ix) {
        const double x = kTwoPi * ix / 16;
        for (const auto& [tau, xi] : fiber) {
          const double q =
              q_value(PhasePoint{t, x, tau, xi});
          sup = std::max(sup,
                         w * std::fabs(q) / (1.0 + tau * tau + xi * xi));
        }
      }
      return sup;
    };
    double c_est = 0.0;
    const int per = 16;
    for (int s = 0; s <= 2 * per; ++s) {
      const double at = std::pow(10.0, double(s) / per);
      c_est = std::max({c_est, weighted(at), weighted(-at)});
    }
    const double far = std::max(weighted(1000.0), weighted(-1000.0));
    r.decay_constant = c_est;
    r.far_field_sup = far;
    r.flatness_ratio = far / (c_est > 0.0 ? c_est : 1.0);
    r.asymptotically_flat = far <= 2.0 * c_est + 1e-15;
  }

  MetricS1 metric_;
  double mu_;
  std::array<Expr, 6> c_;
  std::array<Expr, 6> dt_c_;
  std::array<Expr, 6> dx_c_;
};

}  // namespace kglab
