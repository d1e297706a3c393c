#pragma once

// Hamilton flow of the wave symbol p on T*(R x S^1):
//
//     (dt/ds, dx/ds, dtau/ds, dxi/ds) = (dp/dtau, dp/dxi, -dp/dt, -dp/dx),
//
// integrated with an adaptive embedded Runge-Kutta 5(4) pair
// (Dormand-Prince coefficients, FSAL).  On top of the integrator:
//
//   * null_lift       — solve p = 0 for tau over a base point (stable
//                       quadratic formula, branch = larger/smaller root);
//   * classify        — finite-horizon trapping verdict per flow direction,
//                       with fixed-point and recurrence certificates and
//                       Undetermined as a first-class outcome;
//   * nontrapping_scan— stratified model-level classification summary;
//   * velocity_bound_scan — max of |2 tau - dp/dtau| / |tau| over sampled
//                       null covectors with |t| >= T, and the least T
//                       where it drops below a given c1 < 1;
//   * trace_csv       — CSV export (s,t,x,tau,xi,p) at 17 significant digits.
//
// The x coordinate of a trace is kept unwrapped for continuity; evaluation
// wraps internally, so periodicity of the data is respected regardless.

#include "kglab/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kglab {

enum class Branch { Plus, Minus };
enum class TrapOutcome { EscapesUp, EscapesDown, Trapped, Undetermined };

inline const char* to_string(TrapOutcome o) {
  switch (o) {
    case TrapOutcome::EscapesUp: return "EscapesUp";
    case TrapOutcome::EscapesDown: return "EscapesDown";
    case TrapOutcome::Trapped: return "Trapped";
    default: return "Undetermined";
  }
}

// One integrated characteristic: samples at the accepted steps.
struct FlowTrace {
  std::vector<double> s;
  std::vector<PhasePoint> state;
  std::vector<double> p;
  long accepted = 0;
  long rejected = 0;
  bool underflow = false;       // step size collapsed; trace is partial
  bool step_limit_hit = false;  // iteration cap reached; trace is partial

  // max_i |p(s_i) - p(s_0)|
  double drift() const {
    double d = 0.0;
    for (double v : p) d = std::max(d, std::fabs(v - p.front()));
    return d;
  }
};

// Solves p(t, x, tau, xi) = 0 for tau.  The fiber restriction of p is
//   (1 + c20) tau^2 + (c10 + c11 xi) tau + (c00 + c01 xi + (c02 - 1/g) xi^2),
// a real quadratic; Branch::Plus selects the larger root.
inline PhasePoint null_lift(const SpacetimeModel& m, double t, double x,
                            double xi, Branch branch) {
  const auto c = m.fiber_coeff_values(t, x);
  const double A = 1.0 + c[3];
  const double B = c[1] + c[4] * xi;
  const double C =
      c[0] + c[2] * xi + (c[5] - m.metric().inverse(wrap_angle(x))) * xi * xi;
  double tau;
  if (std::fabs(A) < 1e-14) {
    if (std::fabs(B) < 1e-14)
      throw std::domain_error("null lift: fiber equation has no usable root");
    tau = -C / B;  // the quadratic degenerates to a single linear root
  } else {
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0)
      throw std::domain_error("null lift: no real root over this base point");
    const double sq = std::sqrt(disc);
    double r1, r2;
    if (B == 0.0 && C == 0.0) {
      r1 = r2 = 0.0;
    } else {
      const double qf = -0.5 * (B + (B >= 0.0 ? sq : -sq));
      r1 = qf / A;
      r2 = (qf != 0.0) ? C / qf : -B / A - r1;
    }
    const double hi = std::max(r1, r2);
    const double lo = std::min(r1, r2);
    tau = (branch == Branch::Plus) ? hi : lo;
  }
  if (tau == 0.0 && xi == 0.0)
    throw std::domain_error("null lift: produced the zero covector");
  return PhasePoint{t, x, tau, xi};
}

namespace detail_flow {

using State = std::array<double, 4>;

inline State hamilton_field(const SpacetimeModel& m, const State& y) {
  const Grad4 g = m.grad_p(PhasePoint{y[0], y[1], y[2], y[3]});
  return State{g.dtau, g.dxi, -g.dt, -g.dx};
}

// Outcome counters for one adaptive drive.
struct DriveStats {
  long accepted = 0;
  long rejected = 0;
  bool underflow = false;       // step size collapsed; drive is partial
  bool step_limit_hit = false;  // iteration cap reached; drive is partial
  bool start_failed = false;    // field threw at the start state
};

// Generic adaptive Dormand-Prince 5(4) FSAL driver over a four-component
// state, shared by the bicharacteristic tracer and the mode-connection
// shooter. field(s, y) returns dy/ds and may throw EvalError (the step is
// rejected and retried smaller). err_scale(i, y, y5) gives the acceptance
// denominator for component i. observe fires at the start state and after
// every accepted step; stop(s, y) ends the drive early after an accepted
// step. Integrates from s0 to s1 in either direction with initial step h0.
template <typename Field, typename ScaleFn, typename ObserveFn,
          typename StopFn>
DriveStats dp45_drive(Field&& field, ScaleFn&& err_scale, State& y, double s0,
                      double s1, double h0, ObserveFn&& observe,
                      StopFn&& stop) {
  // Dormand-Prince 5(4) tableau
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                   a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                   a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                   b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // 5th-minus-4th order error weights (FSAL: stage 7 is the new state)
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  DriveStats dr;
  double s = s0;
  observe(s0, y);
  if (s1 == s0) return dr;

  const double dir = (s1 > s0) ? 1.0 : -1.0;
  double h = h0;
  State k1;
  try {
    k1 = field(s, y);
  } catch (const EvalError&) {
    dr.underflow = true;
    dr.start_failed = true;
    return dr;
  }

  const long kMaxIters = 2'000'000;
  for (long iter = 0; iter < kMaxIters; ++iter) {
    if (dir * (s1 - s) <= 0.0) break;
    bool clamped = false;
    if (dir * (s + h - s1) > 0.0) {
      h = s1 - s;
      clamped = true;
    }

    bool stage_failed = false;
    State y5{}, k7{};
    double err = 0.0;
    try {
      State k2, k3, k4, k5, k6;
      State w;
      for (int i = 0; i < 4; ++i) w[i] = y[i] + h * a21 * k1[i];
      k2 = field(s + c2 * h, w);
      for (int i = 0; i < 4; ++i)
        w[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
      k3 = field(s + c3 * h, w);
      for (int i = 0; i < 4; ++i)
        w[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
      k4 = field(s + c4 * h, w);
      for (int i = 0; i < 4; ++i)
        w[i] = y[i] +
               h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      k5 = field(s + c5 * h, w);
      for (int i = 0; i < 4; ++i)
        w[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] +
                           a64 * k4[i] + a65 * k5[i]);
      k6 = field(s + h, w);
      for (int i = 0; i < 4; ++i)
        y5[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] +
                            b5 * k5[i] + b6 * k6[i]);
      k7 = field(s + h, y5);
      double acc = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] +
                               e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        const double sc = err_scale(i, y, y5);
        acc += (ei / sc) * (ei / sc);
      }
      err = std::sqrt(acc / 4.0);
      for (int i = 0; i < 4; ++i)
        if (!std::isfinite(y5[i])) stage_failed = true;
      if (!std::isfinite(err)) stage_failed = true;
    } catch (const EvalError&) {
      stage_failed = true;
    }

    if (!stage_failed && err <= 1.0) {
      s = clamped ? s1 : s + h;
      y = y5;
      k1 = k7;
      ++dr.accepted;
      observe(s, y);
      if (stop(s, y)) break;
      const double fac =
          (err == 0.0) ? 5.0
                       : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      ++dr.rejected;
      const double fac =
          stage_failed
              ? 0.2
              : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
      h *= fac;
    }
    if (std::fabs(h) < 1e-14 * (1.0 + std::fabs(s))) {
      dr.underflow = true;
      break;
    }
    if (iter + 1 == kMaxIters) dr.step_limit_hit = true;
  }
  return dr;
}

// Integrates from s0 to s1 (either direction); stop(s, state) ends the
// trace early after an accepted step.
template <typename StopFn>
FlowTrace integrate_impl(const SpacetimeModel& m, const PhasePoint& pt,
                         double s0, double s1, double tol, StopFn&& stop) {
  if (!(tol >= 1e-12 && tol <= 1e-6))
    throw std::invalid_argument(
        "flow tolerance must lie in [1e-12, 1e-6]");
  if (!std::isfinite(pt.t) || !std::isfinite(pt.x) || !std::isfinite(pt.tau) ||
      !std::isfinite(pt.xi))
    throw std::invalid_argument("flow start point must be finite");

  FlowTrace tr;
  State y{pt.t, pt.x, pt.tau, pt.xi};
  const double dir = (s1 > s0) ? 1.0 : -1.0;
  const double span = std::fabs(s1 - s0);
  const DriveStats dr = dp45_drive(
      [&m](double, const State& w) { return hamilton_field(m, w); },
      [tol](int i, const State& a, const State& b) {
        return tol + tol * std::max(std::fabs(a[i]), std::fabs(b[i]));
      },
      y, s0, s1, dir * std::min(0.1, span),
      [&](double at_s, const State& w) {
        const PhasePoint q{w[0], w[1], w[2], w[3]};
        tr.s.push_back(at_s);
        tr.state.push_back(q);
        tr.p.push_back(m.eval_p(q));
      },
      [&](double at_s, const State&) { return stop(at_s, tr.state.back()); });
  tr.accepted = dr.accepted;
  tr.rejected = dr.rejected;
  tr.underflow = dr.underflow;
  tr.step_limit_hit = dr.step_limit_hit;
  return tr;
}

}  // namespace detail_flow

// Full-span integration of the Hamilton flow.
inline FlowTrace integrate(const SpacetimeModel& m, const PhasePoint& pt,
                           std::pair<double, double> s_span,
                           double tol = 1e-10) {
  return detail_flow::integrate_impl(
      m, pt, s_span.first, s_span.second, tol,
      [](double, const PhasePoint&) { return false; });
}

// Trapping verdict for the two flow directions from one null covector.
struct TrapVerdict {
  TrapOutcome forward = TrapOutcome::Undetermined;
  TrapOutcome backward = TrapOutcome::Undetermined;
  double escape_s_forward = std::numeric_limits<double>::quiet_NaN();
  double escape_s_backward = std::numeric_limits<double>::quiet_NaN();
  double max_abs_t_forward = 0.0;
  double max_abs_t_backward = 0.0;
};

namespace detail_flow {

inline TrapOutcome analyze_direction(const SpacetimeModel& m,
                                     const FlowTrace& tr, bool forward,
                                     double t_escape, double* escape_s,
                                     double* max_abs_t) {
  *escape_s = std::numeric_limits<double>::quiet_NaN();
  *max_abs_t = 0.0;
  for (std::size_t i = 0; i < tr.s.size(); ++i) {
    *max_abs_t = std::max(*max_abs_t, std::fabs(tr.state[i].t));
    if (std::isnan(*escape_s) && std::fabs(tr.state[i].t) > t_escape)
      *escape_s = tr.s[i];
  }
  if (tr.s.size() < 2 || tr.underflow || tr.step_limit_hit)
    return TrapOutcome::Undetermined;

  const double t_end = tr.state.back().t;
  if (std::fabs(t_end) > t_escape) {
    // sign of dt/ds over the trailing 10% of the covered arc must be
    // stable and consistent with |t| still growing in flow direction
    const double s_begin = tr.s.front();
    const double s_end = tr.s.back();
    const double w = s_end - 0.1 * (s_end - s_begin);
    const double dir = forward ? 1.0 : -1.0;
    int sgn = 0;
    bool stable = true;
    for (std::size_t i = 0; i < tr.s.size(); ++i) {
      if (dir * (tr.s[i] - w) < 0.0) continue;
      const double v = m.grad_p(tr.state[i]).dtau;  // dt/ds
      const int sv = (v > 0.0) ? 1 : (v < 0.0 ? -1 : 0);
      if (sv == 0) stable = false;
      if (sgn == 0)
        sgn = sv;
      else if (sv != sgn)
        stable = false;
    }
    const int t_sign = (t_end > 0.0) ? 1 : -1;
    const int expected = forward ? t_sign : -t_sign;
    if (stable && sgn == expected)
      return (t_end > 0.0) ? TrapOutcome::EscapesUp : TrapOutcome::EscapesDown;
    return TrapOutcome::Undetermined;
  }

  // horizon exhausted inside |t| <= t_escape: look for a recurrence
  const PhasePoint& a = tr.state.front();
  const double scale =
      1.0 + std::fabs(a.t) + std::fabs(a.x) + std::fabs(a.tau) +
      std::fabs(a.xi);
  for (std::size_t i = 1; i < tr.s.size(); ++i) {
    if (std::fabs(tr.s[i] - tr.s.front()) < 0.5) continue;
    const PhasePoint& b = tr.state[i];
    double dx = std::fabs(wrap_angle(b.x) - wrap_angle(a.x));
    dx = std::min(dx, kTwoPi - dx);
    const double d =
        std::fabs(b.t - a.t) + dx + std::fabs(b.tau - a.tau) +
        std::fabs(b.xi - a.xi);
    if (d <= 1e-6 * scale) return TrapOutcome::Trapped;
  }
  return TrapOutcome::Undetermined;
}

}  // namespace detail_flow

inline TrapVerdict classify(const SpacetimeModel& m, const PhasePoint& pt,
                            double s_max = 1e3, double t_escape = 100.0,
                            double tol = 1e-10) {
  if (std::fabs(m.eval_p(pt)) > 1e-8)
    throw std::invalid_argument("classify requires a null covector");
  if (pt.tau == 0.0 && pt.xi == 0.0)
    throw std::invalid_argument("classify requires a nonzero covector");

  TrapVerdict v;
  const Grad4 g = m.grad_p(pt);
  const double field_norm = std::fabs(g.dt) + std::fabs(g.dx) +
                            std::fabs(g.dtau) + std::fabs(g.dxi);
  const double scale = 1.0 + std::fabs(pt.t) + std::fabs(pt.x) +
                       std::fabs(pt.tau) + std::fabs(pt.xi);
  if (field_norm <= 1e-12 * scale) {
    // genuine stationary point of the Hamilton field
    v.forward = v.backward = TrapOutcome::Trapped;
    v.max_abs_t_forward = v.max_abs_t_backward = std::fabs(pt.t);
    return v;
  }

  auto stop = [t_escape](double, const PhasePoint& st) {
    return std::fabs(st.t) > t_escape;
  };
  FlowTrace fwd = detail_flow::integrate_impl(m, pt, 0.0, s_max, tol, stop);
  v.forward = detail_flow::analyze_direction(
      m, fwd, true, t_escape, &v.escape_s_forward, &v.max_abs_t_forward);
  FlowTrace bwd = detail_flow::integrate_impl(m, pt, 0.0, -s_max, tol, stop);
  v.backward = detail_flow::analyze_direction(
      m, bwd, false, t_escape, &v.escape_s_backward, &v.max_abs_t_backward);
  return v;
}

// Stratified model-level classification summary.
struct NontrappingReport {
  int total = 0;
  int escaping = 0;
  int trapped = 0;
  int undetermined = 0;
  int lift_failures = 0;      // base points with no real null lift (skipped)
  bool allowed_pattern = true;  // every verdict is (Up,Down) or (Down,Up)
  bool pass = false;
  std::vector<std::pair<PhasePoint, TrapVerdict>> offenders;
};

inline NontrappingReport nontrapping_scan(const SpacetimeModel& m, double T,
                                          int n_t = 9, int n_x = 6,
                                          int n_xi = 3, double s_max = 1e3,
                                          double t_escape = 100.0,
                                          double tol = 1e-10) {
  NontrappingReport r;
  for (int it = 0; it < n_t; ++it) {
    const double t =
        (n_t == 1) ? 0.0 : -2.0 * T + 4.0 * T * double(it) / (n_t - 1);
    for (int ix = 0; ix < n_x; ++ix) {
      const double x = kTwoPi * ix / n_x;
      for (int is = 0; is < 2; ++is) {
        for (int ik = 0; ik < n_xi; ++ik) {
          const double mag =
              (n_xi == 1) ? 1.0 : 0.5 + 1.5 * double(ik) / (n_xi - 1);
          const double xi = (is == 0) ? mag : -mag;
          for (Branch br : {Branch::Plus, Branch::Minus}) {
            PhasePoint pt;
            try {
              pt = null_lift(m, t, x, xi, br);
            } catch (const std::domain_error&) {
              ++r.lift_failures;
              continue;
            }
            const TrapVerdict v = classify(m, pt, s_max, t_escape, tol);
            ++r.total;
            const bool esc_up_down =
                v.forward == TrapOutcome::EscapesUp &&
                v.backward == TrapOutcome::EscapesDown;
            const bool esc_down_up =
                v.forward == TrapOutcome::EscapesDown &&
                v.backward == TrapOutcome::EscapesUp;
            if (esc_up_down || esc_down_up) {
              ++r.escaping;
            } else {
              const bool is_trapped = v.forward == TrapOutcome::Trapped ||
                                      v.backward == TrapOutcome::Trapped;
              if (is_trapped)
                ++r.trapped;
              else
                ++r.undetermined;
              r.allowed_pattern = false;
              if (r.offenders.size() < 8) {
                r.offenders.emplace_back(pt, v);
              } else if (is_trapped) {
                // keep trapped witnesses in preference to inconclusive ones;
                // scan order is fixed, so the displacement is deterministic
                for (auto& rec : r.offenders) {
                  if (rec.second.forward != TrapOutcome::Trapped &&
                      rec.second.backward != TrapOutcome::Trapped) {
                    rec = {pt, v};
                    break;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  r.pass = r.total > 0 && r.escaping == r.total && r.allowed_pattern;
  return r;
}

// Scan of the null-covector velocity comparison |2 tau - dp/dtau| <= c1 |tau|.
struct VelocityBoundReport {
  std::vector<double> t_grid;
  std::vector<double> max_ratio;  // per grid entry
  std::optional<double> t1_found;
  bool same_sign_at_t1 = false;  // sign(tau) == sign(dp/dtau) at |t| >= T1
  int skipped = 0;               // base points with no real null lift
};

inline VelocityBoundReport velocity_bound_scan(const SpacetimeModel& m,
                                               double c1,
                                               std::vector<double> t_grid,
                                               int samples_per_axis = 7) {
  if (!(c1 > 0.0 && c1 < 1.0))
    throw std::invalid_argument("velocity bound constant must be in (0,1)");
  VelocityBoundReport r;
  r.t_grid = std::move(t_grid);

  auto scan_at = [&](double T, bool* same_sign) {
    double worst = 0.0;
    bool sign_ok = true;
    const int n = samples_per_axis;
    for (int it = 0; it < n; ++it) {
      const double at = (n == 1) ? T : T + 3.0 * T * double(it) / (n - 1);
      for (int ts = 0; ts < 2; ++ts) {
        const double t = (ts == 0) ? at : -at;
        for (int ix = 0; ix < 8; ++ix) {
          const double x = kTwoPi * ix / 8;
          for (int ks = 0; ks < 2; ++ks) {
            for (int ik = 0; ik < 4; ++ik) {
              const double mag = 0.5 + 1.5 * double(ik) / 3;
              const double xi = (ks == 0) ? mag : -mag;
              for (Branch br : {Branch::Plus, Branch::Minus}) {
                PhasePoint pt;
                try {
                  pt = null_lift(m, t, x, xi, br);
                } catch (const std::domain_error&) {
                  ++r.skipped;
                  continue;
                }
                const double dptau = m.grad_p(pt).dtau;
                if (std::fabs(pt.tau) < 1e-12) {
                  worst = std::numeric_limits<double>::infinity();
                  sign_ok = false;
                  continue;
                }
                worst = std::max(worst, std::fabs(2.0 * pt.tau - dptau) /
                                            std::fabs(pt.tau));
                if (pt.tau * dptau <= 0.0) sign_ok = false;
              }
            }
          }
        }
      }
    }
    if (same_sign) *same_sign = sign_ok;
    return worst;
  };

  for (double T : r.t_grid) {
    r.max_ratio.push_back(scan_at(T, nullptr));
    const bool ok = r.max_ratio.back() <= c1;
    if (ok && (!r.t1_found || T < *r.t1_found)) r.t1_found = T;
  }
  if (r.t1_found) {
    bool ss = false;
    scan_at(*r.t1_found, &ss);
    r.same_sign_at_t1 = ss;
  }
  return r;
}

// CSV export of a trace: header s,t,x,tau,xi,p, 17 significant digits.
inline std::string trace_csv(const FlowTrace& tr) {
  std::string out = "s,t,x,tau,xi,p\n";
  char buf[256];
  for (std::size_t i = 0; i < tr.s.size(); ++i) {
    std::snprintf(buf, sizeof buf,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", tr.s[i],
                  tr.state[i].t, tr.state[i].x, tr.state[i].tau,
                  tr.state[i].xi, tr.p[i]);
    out += buf;
  }
  return out;
}

}  // namespace kglab
