#pragma once

// Spectral probes for the assembled operators and the per-mode reduction:
//  * a smallest-singular-value estimator at a complex shift, run as inverse
//    iteration on the normal operator with conjugate-gradient inner solves
//    (an assembly sanity gate: real-symmetric truncations keep the shifted
//    operator bounded below by |Im z|);
//  * the symmetric-pairing defect functional, whose vanishing is exactly the
//    imaginary-part identity a self-adjoint assembly must satisfy at every
//    complex shift;
//  * a two-sided connection (Wronskian) computation for the decoupled mode
//    families of x-independent flat-metric models — the substantive probe
//    that rules out square-integrable kernel elements mode by mode;
//  * semiclassical decay ladders: power-law fits of multiplier norms on
//    shrinking wave packets, separating on-window from off-window centers.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kglab/flow.hpp"
#include "kglab/model.hpp"
#include "kglab/quantize.hpp"

namespace kglab {

// ---------------------------------------------------------------------------
// Smallest singular value at a complex shift.
// ---------------------------------------------------------------------------

// Matrix-free complex linear action: out = A * in. The action must represent
// a Hermitian operator for sigma_min (the adjoint is applied as A itself).
using LinearAction =
    std::function<void(const Eigen::VectorXcd&, Eigen::VectorXcd&)>;

struct SigmaMinOptions {
  unsigned seed = 20240901;       // start-vector seed (deterministic runs)
  int max_outer = 200;            // inverse-iteration sweep cap
  int max_cg = 10000;             // conjugate-gradient cap per sweep
  double stagnation_tol = 1e-12;  // relative settle threshold on the estimate
  double cg_tol = 1e-13;          // relative residual target of inner solves
};

struct SigmaMinEstimate {
  // Rayleigh estimate of the smallest singular value; it approaches the true
  // value from above, so lower-bound gates hold even for a partial run.
  double sigma = 0.0;
  Eigen::VectorXcd v;      // minimizing vector, unit Euclidean norm
  bool converged = false;  // estimate stagnated before the sweep cap
  int outer_iterations = 0;
  long applies = 0;        // normal-operator applications performed
  long cg_capped = 0;      // inner solves that hit the iteration cap
  double residual = 0.0;   // ||N v - sigma^2 v|| of the reported pair
};

namespace detail_spectral {

// out = (A - conj(z) I)(A - z I) in, the normal operator of the shifted
// action; Hermitian positive semidefinite whenever A is Hermitian.
inline void normal_apply(const LinearAction& a, std::complex<double> z,
                         const Eigen::VectorXcd& in, Eigen::VectorXcd& out,
                         Eigen::VectorXcd& tmp) {
  a(in, tmp);
  tmp.noalias() -= z * in;
  a(tmp, out);
  out.noalias() -= std::conj(z) * tmp;
}

}  // namespace detail_spectral

// Smallest singular value of (A - z I) for a Hermitian action of dimension n:
// inverse iteration on the normal operator, inner solves by conjugate
// gradients, estimates by the Rayleigh quotient. Deterministic for a fixed
// seed. A run that exhausts max_outer reports converged = false with the
// partial estimate (still an upper bound on nothing -- it sits above the
// true smallest singular value, so >= gates remain meaningful).
inline SigmaMinEstimate sigma_min(const LinearAction& a, Eigen::Index n,
                                  std::complex<double> z,
                                  const SigmaMinOptions& opt = {}) {
  if (n <= 0)
    throw std::invalid_argument("sigma_min: dimension must be positive");
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw std::invalid_argument("sigma_min: shift must be finite");
  if (opt.max_outer < 1 || opt.max_cg < 1)
    throw std::invalid_argument("sigma_min: iteration caps must be positive");

  SigmaMinEstimate est;

  // Deterministic complex Gaussian start vector.
  std::mt19937 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXcd u(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    u[i] = std::complex<double>(re, im);
  }
  u /= u.norm();

  Eigen::VectorXcd tmp(n), nu(n), w(n), r(n), p(n), np(n);
  auto apply_normal = [&](const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
    detail_spectral::normal_apply(a, z, in, out, tmp);
    ++est.applies;
  };

  double rho = 0.0;
  double rho_prev = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    est.outer_iterations = outer + 1;

    // Conjugate gradients on N w = u.
    w.setZero();
    r = u;
    p = r;
    double rs = r.squaredNorm();
    const double rs_stop = opt.cg_tol * opt.cg_tol * rs;
    int cg = 0;
    for (; cg < opt.max_cg && rs > rs_stop; ++cg) {
      apply_normal(p, np);
      const double denom = std::real(p.dot(np));
      if (!(denom > 0.0)) break;  // numerically singular search direction
      const double alpha = rs / denom;
      w.noalias() += alpha * p;
      r.noalias() -= alpha * np;
      const double rs_next = r.squaredNorm();
      p = r + (rs_next / rs) * p;
      rs = rs_next;
    }
    if (cg == opt.max_cg) ++est.cg_capped;

    const double wn = w.norm();
    if (!(wn > 0.0) || !std::isfinite(wn)) break;  // keep previous iterate
    u = w / wn;

    apply_normal(u, nu);
    rho = std::real(u.dot(nu));
    est.residual = (nu - rho * u).norm();
    if (outer >= 1 &&
        std::fabs(rho - rho_prev) <= opt.stagnation_tol * std::fabs(rho)) {
      est.converged = true;
      break;
    }
    rho_prev = rho;
  }

  est.sigma = std::sqrt(std::max(rho, 0.0));
  est.v = u;
  return est;
}

struct SigmaMinResult {
  double sigma = 0.0;
  GridFunction v;  // minimizing vector, unit cell-weighted norm
  bool converged = false;
  int outer_iterations = 0;
  double residual = 0.0;
};

// Assembled-operator flavor. Requires the self-adjoint assembly flag: the
// iteration applies the adjoint as the operator itself.
inline SigmaMinResult sigma_min(const SparseOperator& op,
                                std::complex<double> z,
                                const SigmaMinOptions& opt = {}) {
  if (!op.symmetric)
    throw std::invalid_argument(
        "sigma_min: operator must carry the self-adjoint assembly flag");
  const Eigen::Index n =
      static_cast<Eigen::Index>(op.grid.n_t) * op.grid.n_x;
  LinearAction act = [&op](const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
    GridFunction gf(op.grid);
    std::copy(in.data(), in.data() + in.size(), gf.v.begin());
    GridFunction res = op.apply(gf);
    out.resize(in.size());
    std::copy(res.v.begin(), res.v.end(), out.data());
  };
  const SigmaMinEstimate e = sigma_min(act, n, z, opt);

  SigmaMinResult out;
  out.sigma = e.sigma;
  out.converged = e.converged;
  out.outer_iterations = e.outer_iterations;
  out.residual = e.residual;
  out.v = GridFunction(op.grid);
  std::copy(e.v.data(), e.v.data() + e.v.size(), out.v.v.begin());
  const double nv = out.v.norm();
  if (nv > 0.0)
    for (auto& c : out.v.v) c /= nv;
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric-pairing defect.
// ---------------------------------------------------------------------------

// | Im<phi, (A - z) phi> + Im z * ||phi||^2 | in the Euclidean pairing.
// Identically zero (up to roundoff) for Hermitian actions, at every shift;
// a planted asymmetry leaks into the imaginary part and is detected.
inline double symmetry_identity(const LinearAction& a,
                                const Eigen::VectorXcd& phi,
                                std::complex<double> z) {
  Eigen::VectorXcd aphi(phi.size());
  a(phi, aphi);
  const double n2 = phi.squaredNorm();
  const std::complex<double> pair = phi.dot(aphi) - z * n2;
  return std::fabs(pair.imag() + z.imag() * n2);
}

// Assembled-operator flavor in the cell-weighted pairing.
inline double symmetry_identity(const SparseOperator& op,
                                const GridFunction& phi,
                                std::complex<double> z) {
  const GridFunction aphi = op.apply(phi);
  const double n2 = std::real(inner(phi, phi));
  const std::complex<double> pair = inner(phi, aphi) - z * n2;
  return std::fabs(pair.imag() + z.imag() * n2);
}

// ---------------------------------------------------------------------------
// Per-mode connection (two-sided shooting Wronskian).
// ---------------------------------------------------------------------------

enum class ModeVerdict {
  NoKernel,        // connection determinant clearly nonzero
  PossibleKernel,  // connection determinant below threshold
  Undetermined     // exponents too close to the imaginary axis, or a
                   // partial integration
};

inline const char* to_string(ModeVerdict v) {
  switch (v) {
    case ModeVerdict::NoKernel: return "NoKernel";
    case ModeVerdict::PossibleKernel: return "PossibleKernel";
    default: return "Undetermined";
  }
}

struct ModeOptions {
  double ode_tol = 1e-11;     // adaptive tolerance of the connection shooter
  double w_tol = 1e-8;        // relative connection threshold for the verdict
  double axis_margin = 1e-6;  // minimum |Re r| / (1 + |r|) before the
                              // shooting directions are declared stiff
};

struct ModeConnection {
  int m = 0;
  std::complex<double> z;
  // Characteristic exponents of the constant-coefficient limit equation:
  // exponent_minus decays toward t -> -infinity (Re > 0 off the real axis),
  // exponent_plus toward +infinity (its negative).
  std::complex<double> exponent_minus;
  std::complex<double> exponent_plus;
  std::complex<double> W;  // connection determinant at the matching time 0
  double w_abs = 0.0;      // |W|, always >= 0
  double w_rel = 0.0;      // |W| scaled by the two solution magnitudes at 0
  double norm_minus = 0.0;
  double norm_plus = 0.0;
  double L = 0.0;          // truncation half-width used for the shooting
  bool integration_clean = false;
  ModeVerdict verdict = ModeVerdict::Undetermined;
};

namespace detail_spectral {

// Coefficient bundle of the decoupled mode equation. With x-independent
// fiber coefficients and the flat metric, the mode-m component satisfies the
// complex second-order equation
//   at(t) u'' = bt(t) u' + ct(t) u,
// obtained from the symmetrized (Weyl) ordering in the time direction:
//   at = 1 + c20,
//   bt = -c20' - i (c10 + m c11),
//   ct = -m^2 - c20''/4 - (i/2)(c10' + m c11')
//        + c00 + m c01 + m^2 c02 - z.
struct ModeCoefficients {
  Expr c00, c10, c01, c20, c11, c02;
  Expr dc10, dc11, dc20, ddc20;
  double m = 0.0;
  std::complex<double> z;

  double at(double t) const { return 1.0 + c20.eval(t, 0.0); }
  std::complex<double> bt(double t) const {
    return std::complex<double>(
        -dc20.eval(t, 0.0), -(c10.eval(t, 0.0) + m * c11.eval(t, 0.0)));
  }
  std::complex<double> ct(double t) const {
    const double re = -m * m - 0.25 * ddc20.eval(t, 0.0) +
                      c00.eval(t, 0.0) + m * c01.eval(t, 0.0) +
                      m * m * c02.eval(t, 0.0);
    const double im = -0.5 * (dc10.eval(t, 0.0) + m * dc11.eval(t, 0.0));
    return std::complex<double>(re, im) - z;
  }
};

// Root of a r^2 = b r + c with the largest (sign > 0) or smallest (sign < 0)
// real part: the locally decaying/growing characteristic direction of the
// frozen-coefficient equation.
inline std::complex<double> frozen_root(double a, std::complex<double> b,
                                        std::complex<double> c, int sign) {
  const std::complex<double> disc = std::sqrt(b * b + 4.0 * a * c);
  const std::complex<double> r1 = (b + disc) / (2.0 * a);
  const std::complex<double> r2 = (b - disc) / (2.0 * a);
  const bool first_hi = r1.real() >= r2.real();
  if (sign > 0) return first_hi ? r1 : r2;
  return first_hi ? r2 : r1;
}

inline double axis_distance(std::complex<double> r) {
  return std::fabs(r.real()) / (1.0 + std::abs(r));
}

}  // namespace detail_spectral

// Connection probe for the mode-m component of an x-independent flat-metric
// model at the complex shift z: integrates the solution launched on the
// locally decaying characteristic direction at t = -L rightward and at
// t = +L leftward (the same adaptive 5(4) core as the bicharacteristic
// tracer), and evaluates the Wronskian of the two solutions at t = 0. A
// connection determinant above w_tol (relative to the product of the two
// solution magnitudes) certifies that the truncated mode equation has no
// solution decaying in both directions.
inline ModeConnection mode_deficiency(const SpacetimeModel& model, int m,
                                      std::complex<double> z, double L,
                                      const ModeOptions& opt = {}) {
  if (!std::isfinite(L) || !(L >= 1.0))
    throw std::invalid_argument(
        "mode_deficiency: truncation half-width must be >= 1");
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw std::invalid_argument("mode_deficiency: shift must be finite");
  if (!(opt.ode_tol >= 1e-12 && opt.ode_tol <= 1e-6))
    throw std::invalid_argument(
        "mode_deficiency: tolerance must lie in [1e-12, 1e-6]");

  const MetricS1& metric = model.metric();
  if (!metric.x_only())
    throw std::invalid_argument("mode_deficiency: metric must not depend on t");
  for (int k = 0; k < 256; ++k) {
    const double x = kTwoPi * k / 256.0;
    if (std::fabs(metric.value(x) - 1.0) > 1e-12)
      throw std::invalid_argument(
          "mode_deficiency: the per-mode reduction requires the flat metric");
  }
  constexpr std::array<std::pair<int, int>, 6> kOrders = {
      {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}}};
  for (const auto& [j, k] : kOrders)
    if (model.coeff(j, k).uses(Var::x))
      throw std::invalid_argument(
          "mode_deficiency: the per-mode reduction requires x-independent "
          "coefficients");

  detail_spectral::ModeCoefficients mc;
  mc.c00 = model.coeff(0, 0);
  mc.c10 = model.coeff(1, 0);
  mc.c01 = model.coeff(0, 1);
  mc.c20 = model.coeff(2, 0);
  mc.c11 = model.coeff(1, 1);
  mc.c02 = model.coeff(0, 2);
  mc.dc10 = mc.c10.diff(Var::t);
  mc.dc11 = mc.c11.diff(Var::t);
  mc.dc20 = mc.c20.diff(Var::t);
  mc.ddc20 = mc.dc20.diff(Var::t);
  mc.m = static_cast<double>(m);
  mc.z = z;

  for (int k = 0; k <= 1024; ++k) {
    const double t = -L + 2.0 * L * k / 1024.0;
    if (!(mc.at(t) >= 0.1))
      throw std::invalid_argument(
          "mode_deficiency: leading coefficient degenerates on the window");
  }

  ModeConnection conn;
  conn.m = m;
  conn.z = z;
  conn.L = L;

  // Constant-coefficient limit exponents r^2 = -(m^2 + z); the principal
  // square root carries Re >= 0.
  const std::complex<double> r_inf =
      std::sqrt(-(std::complex<double>(mc.m * mc.m, 0.0) + z));
  conn.exponent_minus = r_inf;
  conn.exponent_plus = -r_inf;

  // Locally decaying characteristic directions at the two launch times.
  const std::complex<double> r_m =
      detail_spectral::frozen_root(mc.at(-L), mc.bt(-L), mc.ct(-L), +1);
  const std::complex<double> r_p =
      detail_spectral::frozen_root(mc.at(L), mc.bt(L), mc.ct(L), -1);

  if (detail_spectral::axis_distance(r_inf) <= opt.axis_margin ||
      detail_spectral::axis_distance(r_m) <= opt.axis_margin ||
      detail_spectral::axis_distance(r_p) <= opt.axis_margin) {
    conn.verdict = ModeVerdict::Undetermined;  // stiff shooting directions
    return conn;
  }

  auto field = [&mc](double t, const detail_flow::State& y) {
    const std::complex<double> u(y[0], y[1]);
    const std::complex<double> up(y[2], y[3]);
    const std::complex<double> upp = (mc.bt(t) * up + mc.ct(t) * u) / mc.at(t);
    return detail_flow::State{y[2], y[3], upp.real(), upp.imag()};
  };
  const double tol = opt.ode_tol;
  // Error control on the magnitudes of the (value, derivative) pairs, so a
  // conjugate shift drives a bitwise-conjugate integration.
  auto scale = [tol](int i, const detail_flow::State& a,
                     const detail_flow::State& b) {
    const int base = (i < 2) ? 0 : 2;
    const double ma = std::hypot(a[base], a[base + 1]);
    const double mb = std::hypot(b[base], b[base + 1]);
    return tol + tol * std::max(ma, mb);
  };
  auto noop = [](double, const detail_flow::State&) {};
  auto never = [](double, const detail_flow::State&) { return false; };

  detail_flow::State ym{1.0, 0.0, r_m.real(), r_m.imag()};
  const double h0m = std::min(L, 0.05 / (1.0 + std::abs(r_m)));
  const detail_flow::DriveStats sm =
      detail_flow::dp45_drive(field, scale, ym, -L, 0.0, h0m, noop, never);

  detail_flow::State yp{1.0, 0.0, r_p.real(), r_p.imag()};
  const double h0p = -std::min(L, 0.05 / (1.0 + std::abs(r_p)));
  const detail_flow::DriveStats sp =
      detail_flow::dp45_drive(field, scale, yp, L, 0.0, h0p, noop, never);

  conn.integration_clean = !sm.underflow && !sm.step_limit_hit &&
                           !sp.underflow && !sp.step_limit_hit;

  const std::complex<double> um(ym[0], ym[1]), upm(ym[2], ym[3]);
  const std::complex<double> up_(yp[0], yp[1]), upp_(yp[2], yp[3]);
  conn.W = um * upp_ - upm * up_;
  conn.w_abs = std::abs(conn.W);
  conn.norm_minus =
      std::sqrt(ym[0] * ym[0] + ym[1] * ym[1] + ym[2] * ym[2] + ym[3] * ym[3]);
  conn.norm_plus =
      std::sqrt(yp[0] * yp[0] + yp[1] * yp[1] + yp[2] * yp[2] + yp[3] * yp[3]);
  conn.w_rel = conn.w_abs / (conn.norm_minus * conn.norm_plus);

  if (!conn.integration_clean || !std::isfinite(conn.w_rel)) {
    conn.verdict = ModeVerdict::Undetermined;
    return conn;
  }
  conn.verdict = (conn.w_rel > opt.w_tol) ? ModeVerdict::NoKernel
                                          : ModeVerdict::PossibleKernel;
  return conn;
}

// ---------------------------------------------------------------------------
// Semiclassical decay ladders.
// ---------------------------------------------------------------------------

struct LadderFit {
  std::vector<double> hs;     // scales, strictly decreasing
  std::vector<double> norms;  // multiplier-output norms per scale
  double s_prime = 0.0;       // fitted power-law exponent
  double r2 = 0.0;            // coefficient of determination of the fit
  int used_points = 0;        // norms above the noise floor entering the fit
};

// Ordinary least squares on (log h, log norm). Norms at or below the noise
// floor are discarded; a fit needs at least four surviving points, otherwise
// the decay outran the measurable window and the exponent is reported as the
// +infinity sentinel (with r2 = 1).
inline LadderFit fit_power_law(const std::vector<double>& hs,
                               const std::vector<double>& norms,
                               double noise_floor = 1e-13) {
  LadderFit f;
  f.hs = hs;
  f.norms = norms;
  std::vector<double> xs, ys;
  const std::size_t n = std::min(hs.size(), norms.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (norms[i] > noise_floor) {
      xs.push_back(std::log(hs[i]));
      ys.push_back(std::log(norms[i]));
    }
  }
  f.used_points = static_cast<int>(xs.size());
  if (f.used_points < 4) {
    f.s_prime = std::numeric_limits<double>::infinity();
    f.r2 = 1.0;
    return f;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) {  // degenerate abscissae
    f.s_prime = std::numeric_limits<double>::infinity();
    f.r2 = 1.0;
    return f;
  }
  f.s_prime = sxy / sxx;
  f.r2 = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// Applies the separable multiplier to wave packets of widths (sqrt h, sqrt h)
// at the given center across the scale ladder and fits the norm decay.
// Packet-placement violations (including boundary clipping) propagate from
// the packet constructor.
inline LadderFit ladder_fit(const SpacetimeModel& m, const SeparableSymbol& sym,
                            const PhasePoint& center,
                            const std::vector<double>& hs,
                            const GridSpec& grid) {
  if (hs.size() < 4)
    throw std::invalid_argument("ladder_fit: need at least four scales");
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (!std::isfinite(hs[i]) || !(hs[i] > 0.0 && hs[i] <= 0.25))
      throw std::invalid_argument("ladder_fit: scales must lie in (0, 1/4]");
    if (i > 0 && !(hs[i] < hs[i - 1]))
      throw std::invalid_argument("ladder_fit: scales must decrease strictly");
  }
  std::vector<double> norms;
  norms.reserve(hs.size());
  for (const double h : hs) {
    const double width = std::sqrt(h);
    const GridFunction psi = wave_packet(grid, center, {width, width}, h);
    const GridFunction out = op_h_multiplier(sym, m, grid, h, psi);
    norms.push_back(out.norm());
  }
  return fit_power_law(hs, norms);
}

}  // namespace kglab
