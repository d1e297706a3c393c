#pragma once

// Escape-region machinery: a slowly-varying slope weight, the weighted
// observable b0 concentrated on incoming or outgoing null directions, the
// bracket positivity gap it generates along the flow, the outgoing boundary
// compensator, grid scans certifying pointwise positivity (with automatic
// enlargement of the activation time T), and a nested parameter ladder.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kglab/chi.hpp"
#include "kglab/model.hpp"

namespace kglab {

enum class EscapeDirection { Incoming, Outgoing };

inline const char* to_string(EscapeDirection d) {
  return d == EscapeDirection::Incoming ? "incoming" : "outgoing";
}

struct EscapeParams {
  double delta = 0.1;    // half-width scale of the frequency/energy windows
  double nu = 0.5;       // slope exponent of the weight; must stay below the
                         // coefficient decay rate of the paired model
  double gamma_w = 1.0;  // polynomial growth/decay rate of the time weight
  double T = 20.0;       // activation time: the observable vanishes for
                         // |t| <= T
  EscapeDirection direction = EscapeDirection::Incoming;
};

inline void validate_escape_params(const EscapeParams& ep) {
  if (!(ep.delta > 0.0) || !(ep.delta < 0.25))
    throw std::invalid_argument("escape: delta must lie in (0, 1/4)");
  if (!(ep.nu > 0.0))
    throw std::invalid_argument("escape: nu must be positive");
  if (!(ep.gamma_w > 0.0))
    throw std::invalid_argument("escape: gamma_w must be positive");
  // The slope weight is only defined for |t| >= 1, so the activation time
  // must keep the support of the observable inside that region.
  if (!(ep.T >= 1.0))
    throw std::invalid_argument("escape: T must be at least 1");
}

inline void validate_escape_params(const EscapeParams& ep,
                                   const SpacetimeModel& m) {
  validate_escape_params(ep);
  if (!(ep.nu < m.mu()))
    throw std::invalid_argument(
        "escape: nu must be strictly below the model decay rate mu");
}

// Slowly varying window half-width. Incoming: increases from delta at
// |t| = 1 towards 2*delta; outgoing: decreases from 2*delta towards delta.
// Only defined for |t| >= 1.
inline double lambda_weight(const EscapeParams& ep, double t) {
  validate_escape_params(ep);
  const double at = std::fabs(t);
  if (!(at >= 1.0))
    throw std::domain_error("lambda_weight: |t| must be at least 1");
  const double tail = ep.delta * std::pow(at, -ep.nu);
  return ep.direction == EscapeDirection::Incoming ? 2.0 * ep.delta - tail
                                                   : ep.delta + tail;
}

// Constant extension below |t| = 1, for consumers that need a width at every
// time slice (the observable itself vanishes there anyway).
inline double lambda_weight_ext(const EscapeParams& ep, double t) {
  return lambda_weight(ep, std::fabs(t) < 1.0 ? 1.0 : t);
}

namespace detail_escape {

inline double dlambda_dt(const EscapeParams& ep, double t) {
  const double at = std::fabs(t);
  const double mag = ep.delta * ep.nu * std::pow(at, -ep.nu - 1.0);
  const double sgn = (t > 0.0) ? 1.0 : -1.0;
  return ep.direction == EscapeDirection::Incoming ? mag * sgn : -mag * sgn;
}

// One branch of the observable: s = +1 concentrates near tau = +1 and
// s = -1 near tau = -1; the time-side cutoff sign is determined by the
// direction (opposite signs of t and tau for incoming, equal for outgoing).
// Accumulates value and exact gradient; contributes nothing when the
// time-side cutoff vanishes identically at the point.
inline void accumulate_branch(const EscapeParams& ep, const SpacetimeModel& m,
                              const PhasePoint& pt, int s, double& val,
                              Grad4& grad) {
  const int sigma1 = (ep.direction == EscapeDirection::Incoming) ? -s : s;
  const double u1 = -static_cast<double>(sigma1) * pt.t / ep.T + 1.0;
  if (u1 >= 0.0) return;  // time cutoff dead (also keeps |t| > T >= 1 below)
  const double z1 = chi1(u1);
  const double z1p_t = chi1_deriv(1, u1) * (-static_cast<double>(sigma1) / ep.T);

  const double lam = lambda_weight(ep, pt.t);
  const double lamp = dlambda_dt(ep, pt.t);
  const double at = std::fabs(pt.t);
  const double sgn_t = (pt.t > 0.0) ? 1.0 : -1.0;

  double W, Wp;
  if (ep.direction == EscapeDirection::Incoming) {
    W = std::pow(at, ep.gamma_w);
    Wp = ep.gamma_w * std::pow(at, ep.gamma_w - 1.0) * sgn_t;
  } else {
    W = std::pow(at, -ep.gamma_w);
    Wp = -ep.gamma_w * std::pow(at, -ep.gamma_w - 1.0) * sgn_t;
  }

  const double u2 = (static_cast<double>(s) * pt.tau - 1.0) / lam;
  const double z2 = chi2(u2);
  const double z2p = chi2_deriv(1, u2);
  const double du2_dt = -u2 * lamp / lam;
  const double du2_dtau = static_cast<double>(s) / lam;

  const double g = m.metric().value(pt.x);
  const double gp = m.metric().deriv(pt.x);
  const double q0v = pt.xi * pt.xi / g;
  const double u3 = (q0v - 1.0) / lam;
  const double z3 = chi2(u3);
  const double z3p = chi2_deriv(1, u3);
  const double du3_dt = -u3 * lamp / lam;
  const double du3_dx = (-pt.xi * pt.xi * gp / (g * g)) / lam;
  const double du3_dxi = (2.0 * pt.xi / g) / lam;

  val += W * z1 * z2 * z3;
  grad.dt += Wp * z1 * z2 * z3 + W * z1p_t * z2 * z3 +
             W * z1 * (z2p * du2_dt) * z3 + W * z1 * z2 * (z3p * du3_dt);
  grad.dx += W * z1 * z2 * (z3p * du3_dx);
  grad.dtau += W * z1 * (z2p * du2_dtau) * z3;
  grad.dxi += W * z1 * z2 * (z3p * du3_dxi);
}

inline std::pair<double, Grad4> b0_eval(const EscapeParams& ep,
                                        const SpacetimeModel& m,
                                        const PhasePoint& pt) {
  double val = 0.0;
  Grad4 grad{};
  if (std::fabs(pt.t) <= ep.T) return {0.0, grad};
  accumulate_branch(ep, m, pt, +1, val, grad);
  accumulate_branch(ep, m, pt, -1, val, grad);
  return {val, grad};
}

}  // namespace detail_escape

// Weighted escape observable.
inline double b0(const EscapeParams& ep, const SpacetimeModel& m,
                 const PhasePoint& pt) {
  validate_escape_params(ep, m);
  return detail_escape::b0_eval(ep, m, pt).first;
}

inline std::pair<double, Grad4> b0_with_grad(const EscapeParams& ep,
                                             const SpacetimeModel& m,
                                             const PhasePoint& pt) {
  validate_escape_params(ep, m);
  return detail_escape::b0_eval(ep, m, pt);
}

inline SymbolFn b0_symbol(const EscapeParams& ep, const SpacetimeModel& m) {
  validate_escape_params(ep, m);
  SymbolFn f;
  f.value = [ep, &m](const PhasePoint& pt) {
    return detail_escape::b0_eval(ep, m, pt).first;
  };
  f.grad = [ep, &m](const PhasePoint& pt) {
    return detail_escape::b0_eval(ep, m, pt).second;
  };
  return f;
}

// Boundary compensator for the outgoing direction: the part of the bracket
// generated by the time-side cutoffs, supported on T <= |t| <= 2T.
inline double tilde_f(const EscapeParams& ep, const SpacetimeModel& m,
                      const PhasePoint& pt) {
  validate_escape_params(ep, m);
  if (ep.direction != EscapeDirection::Outgoing)
    throw std::invalid_argument(
        "tilde_f: compensator only exists for the outgoing direction");
  double sum = 0.0;
  for (int s : {+1, -1}) {
    const double u1 = -static_cast<double>(s) * pt.t / ep.T + 1.0;
    if (u1 <= -1.0 || u1 >= 0.0) continue;  // chi1' vanishes outside (-1,0)
    const double dz1_dt =
        chi1_deriv(1, u1) * (-static_cast<double>(s) / ep.T);
    const double lam = lambda_weight(ep, pt.t);
    const double z2 = chi2((static_cast<double>(s) * pt.tau - 1.0) / lam);
    if (z2 == 0.0) continue;
    const double q0v = pt.xi * pt.xi / m.metric().value(pt.x);
    const double z3 = chi2((q0v - 1.0) / lam);
    if (z3 == 0.0) continue;
    // bracket of tau^2 + q against a function of t alone
    const auto c = m.fiber_coeff_values(pt.t, pt.x);
    const double de_dtau =
        2.0 * pt.tau + c[1] + 2.0 * c[3] * pt.tau + c[4] * pt.xi;
    sum += de_dtau * dz1_dt * z2 * z3;
  }
  return sum;
}

// Pointwise positivity gap of the escape bracket:
//   incoming:  -{tau^2 + q, b0} - c0 |t|^-1 b0
//   outgoing:  -{tau^2 + q, b0} - c0 |t|^-1 b0 + tilde_f
inline double bracket_gap(const EscapeParams& ep, const SpacetimeModel& m,
                          double c0, const PhasePoint& pt) {
  validate_escape_params(ep, m);
  const auto [bval, bgrad] = detail_escape::b0_eval(ep, m, pt);

  // gradient of tau^2 + q: grad of the full symbol with the kinetic fiber
  // part removed
  Grad4 ge = m.grad_p(pt);
  const double g = m.metric().value(pt.x);
  const double gp = m.metric().deriv(pt.x);
  ge.dx -= pt.xi * pt.xi * gp / (g * g);
  ge.dxi += 2.0 * pt.xi / g;

  // grouped as paired differences so that bracketing a symbol with itself
  // cancels exactly
  const double br = (ge.dtau * bgrad.dt - ge.dt * bgrad.dtau) +
                    (ge.dxi * bgrad.dx - ge.dx * bgrad.dxi);
  double gap = -br;
  if (bval != 0.0) gap -= c0 * bval / std::fabs(pt.t);
  if (ep.direction == EscapeDirection::Outgoing) gap += tilde_f(ep, m, pt);
  return gap;
}

struct ScanReport {
  EscapeParams params;
  double c0 = 1.0;
  int grid_res = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  PhasePoint argmin{};
  bool pass = false;
  double t_box = 0.0;  // scanned up to |t| = t_box = 8*T; beyond it every
                       // cutoff argument moves deeper into its flat region,
                       // so the tail is covered analytically, not scanned
  bool tail_beyond_box_analytic = true;
  std::vector<std::pair<double, double>> t_search_history;  // (T, min gap)
};

// Tensor scan of the bracket gap over the support box
//   {T <= |t| <= 8T} x [0, 2pi) x {|tau -+ 1| <= 2*lambda_max} x
//   {|q0 - 1| <= 2*lambda_max},
// with lambda_max = 2*delta and both signs of t, tau, and xi. PASS means
// min gap >= -1e-8.
inline ScanReport positivity_scan(const EscapeParams& ep,
                                  const SpacetimeModel& m, double c0,
                                  int res) {
  validate_escape_params(ep, m);
  if (res < 16)
    throw std::invalid_argument("positivity_scan: res must be at least 16");
  ScanReport rep;
  rep.params = ep;
  rep.c0 = c0;
  rep.grid_res = res;
  rep.t_box = 8.0 * ep.T;

  const double lam_max = 2.0 * ep.delta;
  const double halfw = 2.0 * lam_max;
  for (int st = 0; st < 2; ++st) {
    const double sign_t = (st == 0) ? 1.0 : -1.0;
    for (int it = 0; it < res; ++it) {
      const double at = ep.T + (rep.t_box - ep.T) * it / (res - 1);
      const double t = sign_t * at;
      for (int ix = 0; ix < res; ++ix) {
        const double x = kTwoPi * ix / res;
        const double g = m.metric().value(x);
        for (int stau = 0; stau < 2; ++stau) {
          const double center = (stau == 0) ? 1.0 : -1.0;
          for (int itau = 0; itau < res; ++itau) {
            const double tau =
                center - halfw + 2.0 * halfw * itau / (res - 1);
            for (int sxi = 0; sxi < 2; ++sxi) {
              const double sign_xi = (sxi == 0) ? 1.0 : -1.0;
              for (int iq = 0; iq < res; ++iq) {
                const double q0v =
                    1.0 - halfw + 2.0 * halfw * iq / (res - 1);
                const double xi = sign_xi * std::sqrt(q0v * g);
                const PhasePoint pt{t, x, tau, xi};
                const double gap = bracket_gap(ep, m, c0, pt);
                if (gap < rep.min_gap) {
                  rep.min_gap = gap;
                  rep.argmin = pt;
                }
              }
            }
          }
        }
      }
    }
  }
  rep.pass = rep.min_gap >= -1e-8;
  return rep;
}

// Doubles T until the scan passes (or the doubling budget is exhausted),
// recording (T, min gap) per attempt. The returned report carries the
// parameters that finally passed.
inline ScanReport positivity_t_search(const EscapeParams& ep0,
                                      const SpacetimeModel& m, double c0,
                                      int res, int max_doublings = 10) {
  EscapeParams ep = ep0;
  std::vector<std::pair<double, double>> history;
  ScanReport rep;
  for (int k = 0; k <= max_doublings; ++k) {
    rep = positivity_scan(ep, m, c0, res);
    history.emplace_back(ep.T, rep.min_gap);
    if (rep.pass) break;
    ep.T *= 2.0;
  }
  rep.t_search_history = std::move(history);
  return rep;
}

// Nested family of escape parameters: level j has
//   delta_j = delta0 (1 + j/(2J)),  T_j = T0 (1 - j/(4J)),  j = 0..J.
// Verifies on a grid that wherever the level-j observable is positive, every
// cutoff argument of level j+1 sits strictly inside its flat-or-transition
// region, so the supports nest. Throws on any violation, reporting the
// offending grid point.
inline std::vector<EscapeParams> ladder(const EscapeParams& ep0, int J) {
  validate_escape_params(ep0);
  if (J < 1) throw std::invalid_argument("ladder: J must be at least 1");
  if (!(ep0.delta * std::pow(2.0, J) < 0.25))
    throw std::invalid_argument(
        "ladder: delta budget exceeded (delta0 * 2^J must stay below 1/4)");
  // The tightest level keeps T_J = 0.75*T0, but the stated budget reserves
  // a 2^-J margin above the smallest T at which the slope weight (and the
  // positivity mechanism it drives) is available.
  if (!(ep0.T * std::pow(2.0, -J) >= 1.0))
    throw std::invalid_argument("ladder: T budget too small");

  std::vector<EscapeParams> levels;
  levels.reserve(static_cast<std::size_t>(J) + 1);
  for (int j = 0; j <= J; ++j) {
    EscapeParams ep = ep0;
    ep.delta = ep0.delta * (1.0 + static_cast<double>(j) / (2.0 * J));
    ep.T = ep0.T * (1.0 - static_cast<double>(j) / (4.0 * J));
    validate_escape_params(ep);
    levels.push_back(ep);
  }

  // Support nesting check on a (t, tau-window, q0-window) grid; the cutoff
  // arguments depend on the phase point only through these three scalars.
  const int res = 17;
  for (int j = 0; j < J; ++j) {
    const EscapeParams& a = levels[static_cast<std::size_t>(j)];
    const EscapeParams& b = levels[static_cast<std::size_t>(j) + 1];
    const double lam_max_a = 2.0 * a.delta;
    for (int s : {+1, -1}) {
      const int sigma1 =
          (ep0.direction == EscapeDirection::Incoming) ? -s : s;
      for (int it = 0; it < res; ++it) {
        const double at = a.T + (8.0 * a.T - a.T) * it / (res - 1);
        const double t = sigma1 * at;
        const double u1a = -static_cast<double>(sigma1) * t / a.T + 1.0;
        if (u1a >= 0.0) continue;
        const double lam_a = lambda_weight(a, t);
        const double lam_b = lambda_weight(b, t);
        for (int itau = 0; itau < res; ++itau) {
          const double tau = s * (1.0 - 2.0 * lam_max_a +
                                  4.0 * lam_max_a * itau / (res - 1));
          const double u2a = (static_cast<double>(s) * tau - 1.0) / lam_a;
          if (chi2(u2a) == 0.0) continue;
          for (int iq = 0; iq < res; ++iq) {
            const double q0v =
                1.0 - 2.0 * lam_max_a + 4.0 * lam_max_a * iq / (res - 1);
            const double u3a = (q0v - 1.0) / lam_a;
            if (chi1(u1a) == 0.0 || chi2(u3a) == 0.0) continue;
            // level-j observable positive here; level-(j+1) arguments must
            // be strictly interior
            const double u1b = -static_cast<double>(sigma1) * t / b.T + 1.0;
            const double u2b = (static_cast<double>(s) * tau - 1.0) / lam_b;
            const double u3b = (q0v - 1.0) / lam_b;
            if (!(u1b < 0.0) || !(std::fabs(u2b) < 2.0) ||
                !(std::fabs(u3b) < 2.0)) {
              char buf[160];
              std::snprintf(buf, sizeof(buf),
                            "ladder: nesting violation between levels %d and "
                            "%d at t=%.6g tau=%.6g q0=%.6g",
                            j, j + 1, t, tau, q0v);
              throw std::runtime_error(buf);
            }
          }
        }
      }
    }
  }
  return levels;
}

}  // namespace kglab
