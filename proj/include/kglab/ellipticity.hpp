#pragma once

// Far-field ellipticity machinery: the derived window constants with their
// exact algebraic identity, the time/fiber localizer a and the energy-shell
// window eta, a grid scan certifying |p| >= delta on the retained region,
// the incoming/outgoing transition-weight classifier, and a scale-invariant
// distance to the characteristic set.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "kglab/chi.hpp"
#include "kglab/model.hpp"

namespace kglab {

struct EllipticityConstants {
  double delta = 0.1;
  double gamma_ell = 0.025;  // = delta/4
  double alpha = 0.1 / 4.1;  // = delta/(4+delta)
  double T = 5.0;
};

inline EllipticityConstants make_ellipticity_constants(double delta,
                                                       double T) {
  if (!(delta > 0.0) || !(delta < 1.0))
    throw std::invalid_argument(
        "ellipticity: delta must lie strictly between 0 and 1");
  EllipticityConstants c;
  c.delta = delta;
  c.gamma_ell = delta / 4.0;
  c.alpha = delta / (4.0 + delta);
  c.T = T;
  return c;
}

// Residual of the exact budget identity 2*gamma + alpha*(2 + 2*gamma) =
// delta that makes the lower-bound chain close.
inline double constants_identity_residual(const EllipticityConstants& c) {
  return std::fabs(2.0 * c.gamma_ell + c.alpha * (2.0 + 2.0 * c.gamma_ell) -
                   c.delta);
}

// Localizer concentrated where tau^2 and q0 both sit within delta of 1 and
// |t| is large relative to T: product of two fiber windows and a far-time
// ramp. Value in [0,1].
inline double a_microlocal(const EllipticityConstants& c,
                           const SpacetimeModel& m, const PhasePoint& pt) {
  const double q0v = m.q0(pt.x, pt.xi);
  return chi2(std::fabs(pt.tau * pt.tau - 1.0) / c.delta) *
         chi2(std::fabs(q0v - 1.0) / c.delta) *
         chi1(1.0 - std::fabs(pt.t) / c.T);
}

// Energy-shell window: nonzero only where |tau^2 + q0 - 2| < 2*gamma_ell.
inline double eta(const EllipticityConstants& c, const SpacetimeModel& m,
                  const PhasePoint& pt) {
  const double e = pt.tau * pt.tau + m.q0(pt.x, pt.xi);
  return chi2((e - 2.0) / c.gamma_ell);
}

// Least sampled |t| (log grid on [1, 1e3]) from which on the perturbation
// obeys |q| <= alpha*(tau^2 + q0) across the fiber box intersected with
// {tau^2 + q0 >= 1}. Throws if no sampled time qualifies.
inline double find_T0(const SpacetimeModel& m, double delta) {
  const double alpha = delta / (4.0 + delta);
  const int n_samples = 49;  // 16 per decade over three decades
  const int nf = 17;
  bool ok[n_samples];
  for (int i = 0; i < n_samples; ++i) {
    const double at = std::pow(10.0, static_cast<double>(i) / 16.0);
    bool good = true;
    for (int st = 0; st < 2 && good; ++st) {
      const double t = (st == 0) ? at : -at;
      for (int ix = 0; ix < nf && good; ++ix) {
        const double x = kTwoPi * ix / nf;
        const auto cf = m.fiber_coeff_values(t, x);
        const double g = m.metric().value(x);
        for (int itau = 0; itau < nf && good; ++itau) {
          const double tau = -2.0 + 4.0 * itau / (nf - 1);
          for (int iq = 0; iq < nf && good; ++iq) {
            const double q0v = 4.0 * iq / (nf - 1);
            const double e = tau * tau + q0v;
            if (e < 1.0) continue;
            for (int sxi = 0; sxi < 2 && good; ++sxi) {
              const double xi =
                  (sxi == 0 ? 1.0 : -1.0) * std::sqrt(q0v * g);
              const double qv = cf[0] + cf[1] * tau + cf[2] * xi +
                                cf[3] * tau * tau + cf[4] * tau * xi +
                                cf[5] * xi * xi;
              if (!(std::fabs(qv) <= alpha * e * (1.0 + 1e-12)))
                good = false;
            }
          }
        }
      }
    }
    ok[i] = good;
  }
  // least sample such that the bound holds there and at every later sample
  int first = -1;
  for (int i = n_samples - 1; i >= 0; --i) {
    if (ok[i])
      first = i;
    else
      break;
  }
  if (first < 0)
    throw std::runtime_error(
        "find_T0: perturbation decays too slowly on the sampled range");
  return std::pow(10.0, static_cast<double>(first) / 16.0);
}

struct EllipticityReport {
  EllipticityConstants constants;
  int grid_res = 0;
  long long retained = 0;
  double min_abs_p = std::numeric_limits<double>::infinity();
  PhasePoint argmin{};
  bool pass = false;
  double T0 = 1.0;
  const char* case_at_argmin = "tau";  // which fiber window was active
  double t_box = 0.0;  // scanned up to |t| = 4T; beyond, the perturbation
                       // only shrinks, so the tail is covered analytically
  bool tail_beyond_box_analytic = true;
  long long estimate_violations = 0;
};

// Grid scan of |p| over the region retained by the localizer predicate:
// eta > 0, a < 1 - 1e-12 (the flat plateau of a is excluded to machine
// precision), |t| >= T, and an active fiber window (|tau^2 - 1| >= delta or
// |q0 - 1| >= delta). PASS iff min |p| >= delta*(1 - 1e-6). Also counts
// violations of the two retained-point estimates
//   |tau^2 + q0 - 2| <= 2*gamma_ell  and  |q| <= alpha*(2 + 2*gamma_ell).
inline EllipticityReport appendix_scan(const SpacetimeModel& m, double delta,
                                       double T, int res) {
  if (res < 16)
    throw std::invalid_argument("appendix_scan: res must be at least 16");
  EllipticityReport rep;
  rep.constants = make_ellipticity_constants(delta, T);
  rep.grid_res = res;
  rep.T0 = find_T0(m, delta);
  if (!(T >= rep.T0))
    throw std::invalid_argument(
        "appendix_scan: T must be at least the activation threshold T0");
  rep.t_box = 4.0 * T;

  const EllipticityConstants& c = rep.constants;
  const double qbound = c.alpha * (2.0 + 2.0 * c.gamma_ell) * (1.0 + 1e-9);
  bool argmin_tau_case = true;
  for (int st = 0; st < 2; ++st) {
    const double sign_t = (st == 0) ? 1.0 : -1.0;
    for (int it = 0; it < res; ++it) {
      const double t = sign_t * (T + (rep.t_box - T) * it / (res - 1));
      for (int ix = 0; ix < res; ++ix) {
        const double x = kTwoPi * ix / res;
        const auto cf = m.fiber_coeff_values(t, x);
        const double g = m.metric().value(x);
        const double at_ramp = chi1(1.0 - std::fabs(t) / T);
        for (int itau = 0; itau < res; ++itau) {
          const double tau = -2.0 + 4.0 * itau / (res - 1);
          const double wtau = std::fabs(tau * tau - 1.0);
          const double a_tau = chi2(wtau / c.delta);
          for (int iq = 0; iq < res; ++iq) {
            const double q0v = 4.0 * iq / (res - 1);
            const double e = tau * tau + q0v;
            const double etav = chi2((e - 2.0) / c.gamma_ell);
            if (etav <= 0.0) continue;
            const double wq0 = std::fabs(q0v - 1.0);
            const double a_val = a_tau * chi2(wq0 / c.delta) * at_ramp;
            if (!(a_val < 1.0 - 1e-12)) continue;
            const bool tau_case = wtau >= c.delta;
            if (!tau_case && !(wq0 >= c.delta)) continue;
            for (int sxi = 0; sxi < 2; ++sxi) {
              const double xi =
                  (sxi == 0 ? 1.0 : -1.0) * std::sqrt(q0v * g);
              const double qv = cf[0] + cf[1] * tau + cf[2] * xi +
                                cf[3] * tau * tau + cf[4] * tau * xi +
                                cf[5] * xi * xi;
              const double p = tau * tau - q0v + qv;
              ++rep.retained;
              if (std::fabs(e - 2.0) > 2.0 * c.gamma_ell * (1.0 + 1e-12) ||
                  std::fabs(qv) > qbound)
                ++rep.estimate_violations;
              const double ap = std::fabs(p);
              if (ap < rep.min_abs_p) {
                rep.min_abs_p = ap;
                rep.argmin = PhasePoint{t, x, tau, xi};
                argmin_tau_case = tau_case;
              }
            }
          }
        }
      }
    }
  }
  rep.case_at_argmin = argmin_tau_case ? "tau" : "q0";
  rep.pass = rep.retained > 0 && rep.min_abs_p >= delta * (1.0 - 1e-6);
  return rep;
}

enum class RegionClass { Incoming, Outgoing, Neither };

inline const char* to_string(RegionClass r) {
  switch (r) {
    case RegionClass::Incoming: return "incoming";
    case RegionClass::Outgoing: return "outgoing";
    default: return "neither";
  }
}

struct RegionClassification {
  RegionClass region = RegionClass::Neither;
  double incoming_weight = 0.0;
  double outgoing_weight = 0.0;
};

// Smooth transition weights for the incoming/outgoing microlocal regions:
// past times pair with positive frequencies (and vice versa) for incoming,
// equal signs for outgoing. Classification by majority weight (> 1/2).
inline RegionClassification region_classify(const PhasePoint& pt, double T) {
  const double z1_minus = chi1(pt.t / T + 1.0);   // active for t <= -T
  const double z1_plus = chi1(-pt.t / T + 1.0);   // active for t >= T
  const double z5_plus = chi1(1.0 - pt.tau);      // active for tau >= 1
  const double z5_minus = chi1(1.0 + pt.tau);     // active for tau <= -1
  RegionClassification rc;
  rc.incoming_weight = z1_minus * z5_plus + z1_plus * z5_minus;
  rc.outgoing_weight = z1_minus * z5_minus + z1_plus * z5_plus;
  if (rc.incoming_weight > 0.5)
    rc.region = RegionClass::Incoming;
  else if (rc.outgoing_weight > 0.5)
    rc.region = RegionClass::Outgoing;
  else
    rc.region = RegionClass::Neither;
  return rc;
}

// Scale-invariant ellipticity margin |p| / (tau^2 + q0); zero exactly on
// the characteristic set.
inline double char_distance(const SpacetimeModel& m, const PhasePoint& pt) {
  if (pt.tau == 0.0 && pt.xi == 0.0)
    throw std::invalid_argument("char_distance: zero covector");
  const double denom = pt.tau * pt.tau + m.q0(pt.x, pt.xi);
  return std::fabs(m.eval_p(pt)) / denom;
}

}  // namespace kglab
