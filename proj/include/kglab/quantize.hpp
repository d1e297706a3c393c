#pragma once

// Quantization layer: band-limited assembly of the evolution operator from a
// model's fiber-quadratic symbol (each monomial in its symmetrized Weyl
// ordering, coefficient products dealiased on a doubled lattice), the
// spatial kinetic block and its eigenbasis, the energy-window functional
// calculus acting slice-wise in that basis, separable semiclassical
// multiplier operators, and discrete Gaussian wave packets.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kglab/escape.hpp"
#include "kglab/ellipticity.hpp"
#include "kglab/fft.hpp"
#include "kglab/grid.hpp"
#include "kglab/model.hpp"

namespace kglab {

// Real antisymmetric kernel s with D_x = i s: band-limited differentiation
// on the n-point circle, top mode zeroed.
inline Eigen::MatrixXd spectral_derivative_imag(int n, double period) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double theta = 2.0 * kPi * (a - b) / n;
      double acc = 0.0;
      for (int k = 1; k <= n / 2 - 1; ++k)
        acc += (2.0 * kPi * k / period) * std::sin(k * theta);
      s(a, b) = 2.0 * acc / n;
    }
  }
  return s;
}

// Spatial kinetic block: the x-operator with symbol xi^2 / g(x), assembled
// band-limited as D_x (1/g) D_x - (1/4)(1/g)'' — real symmetric.
inline Eigen::MatrixXd build_q0_block(const SpacetimeModel& m,
                                      const GridSpec& g) {
  g.validate();
  if (!m.metric().x_only())
    throw std::invalid_argument(
        "build_q0_block: metric must not depend on t");
  const int n = g.n_x;
  Eigen::MatrixXd s = spectral_derivative_imag(n, kTwoPi);
  Eigen::VectorXd invg(n), corr(n);
  const Expr inv = m.metric().inverse_expr();
  const Expr d2 = inv.diff(Var::x).diff(Var::x);
  for (int a = 0; a < n; ++a) {
    invg[a] = m.metric().inverse(g.x_at(a));
    corr[a] = d2.eval(0.0, g.x_at(a));
  }
  Eigen::MatrixXd q0 = -(s * invg.asDiagonal() * s);
  for (int a = 0; a < n; ++a) q0(a, a) -= 0.25 * corr[a];
  return q0;
}

namespace detail_quant {

// In-place 2D FFT over a row-major nt x nx buffer (rows are x-lines).
inline void fft2(std::complex<double>* a, int nt, int nx, bool inverse) {
  for (int i = 0; i < nt; ++i)
    detail_fft::fft_inplace(a + static_cast<std::size_t>(i) * nx, nx, inverse);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(nt));
  for (int c = 0; c < nx; ++c) {
    for (int i = 0; i < nt; ++i)
      buf[static_cast<std::size_t>(i)] =
          a[static_cast<std::size_t>(i) * nx + c];
    detail_fft::fft_inplace(buf.data(), nt, inverse);
    for (int i = 0; i < nt; ++i)
      a[static_cast<std::size_t>(i) * nx + c] =
          buf[static_cast<std::size_t>(i)];
  }
}

// Binomial weights for the symmetrized operator orderings (degrees <= 2).
constexpr double kBinom[3][3] = {
    {1.0, 0.0, 0.0}, {1.0, 1.0, 0.0}, {1.0, 2.0, 1.0}};

}  // namespace detail_quant

// One quantized fiber monomial a(t,x) tau^{deg_t} xi^{deg_x}: the
// coefficient is held as samples on the doubled lattice so products can be
// formed without aliasing.
struct FiberTerm {
  int deg_t = 0;
  int deg_x = 0;
  std::vector<double> coeff2;  // (2 n_t) x (2 n_x) samples, row-major
};

// Assembled grid operator. The name reflects the role (structured operator
// with factored sparse-in-structure terms); applications are matrix-free and
// a dense matrix can be materialized for small grids.
class SparseOperator {
 public:
  GridSpec grid;
  double h = 1.0;
  bool symmetric = true;  // self-adjoint assembly (real coefficients)

  std::vector<FiberTerm> terms;
  Eigen::MatrixXd q0_block;

  GridFunction apply(const GridFunction& psi) const {
    const int nt = grid.n_t, nx = grid.n_x;
    const std::size_t n = psi.v.size();

    // frequency multipliers, top modes zeroed
    std::vector<double> tau(static_cast<std::size_t>(nt));
    std::vector<double> xi(static_cast<std::size_t>(nx));
    for (int k = 0; k < nt; ++k)
      tau[static_cast<std::size_t>(k)] =
          (k == nt / 2) ? 0.0
                        : kPi * detail_fft::signed_mode(k, nt) / grid.L;
    for (int m = 0; m < nx; ++m)
      xi[static_cast<std::size_t>(m)] =
          (m == nx / 2)
              ? 0.0
              : static_cast<double>(detail_fft::signed_mode(m, nx));

    std::vector<std::complex<double>> hat(psi.v);
    detail_quant::fft2(hat.data(), nt, nx, false);

    // (h D_t)^2 acts on the full mode set
    std::vector<std::complex<double>> acc(n, std::complex<double>(0.0, 0.0));
    for (int k = 0; k < nt; ++k) {
      const double w = (h * tau[static_cast<std::size_t>(k)]) *
                       (h * tau[static_cast<std::size_t>(k)]);
      for (int m = 0; m < nx; ++m) {
        const std::size_t idx = static_cast<std::size_t>(k) * nx + m;
        acc[idx] = w * hat[idx];
      }
    }

    // open-band copy feeding the fiber terms
    std::vector<std::complex<double>> band(hat);
    for (int m = 0; m < nx; ++m)
      band[static_cast<std::size_t>(nt / 2) * nx + m] =
          std::complex<double>(0.0, 0.0);
    for (int k = 0; k < nt; ++k)
      band[static_cast<std::size_t>(k) * nx + nx / 2] =
          std::complex<double>(0.0, 0.0);

    const int NT = 2 * nt, NX = 2 * nx;
    std::vector<std::complex<double>> w1(n);
    std::vector<std::complex<double>> padbuf(
        static_cast<std::size_t>(NT) * NX);
    for (const FiberTerm& term : terms) {
      const double hpow = std::pow(h, term.deg_t + term.deg_x);
      const double split = 1.0 / static_cast<double>(
                                     1 << (term.deg_t + term.deg_x));
      for (int p = 0; p <= term.deg_t; ++p) {
        for (int q = 0; q <= term.deg_x; ++q) {
          const double wgt = hpow * split *
                             detail_quant::kBinom[term.deg_t][p] *
                             detail_quant::kBinom[term.deg_x][q];
          // right-hand frequency factors tau^{deg_t - p} xi^{deg_x - q}
          for (int k = 0; k < nt; ++k)
            for (int m = 0; m < nx; ++m) {
              const std::size_t idx = static_cast<std::size_t>(k) * nx + m;
              w1[idx] = band[idx] *
                        std::pow(tau[static_cast<std::size_t>(k)],
                                 term.deg_t - p) *
                        std::pow(xi[static_cast<std::size_t>(m)],
                                 term.deg_x - q);
            }
          // dealiased product on the doubled lattice
          std::fill(padbuf.begin(), padbuf.end(),
                    std::complex<double>(0.0, 0.0));
          for (int k = 0; k < nt; ++k) {
            if (k == nt / 2) continue;
            const int kk = detail_fft::signed_mode(k, nt);
            const int kp = (kk + NT) % NT;
            for (int m = 0; m < nx; ++m) {
              if (m == nx / 2) continue;
              const int mm = detail_fft::signed_mode(m, nx);
              const int mp = (mm + NX) % NX;
              padbuf[static_cast<std::size_t>(kp) * NX + mp] =
                  w1[static_cast<std::size_t>(k) * nx + m];
            }
          }
          detail_quant::fft2(padbuf.data(), NT, NX, true);
          for (std::size_t l = 0; l < padbuf.size(); ++l)
            padbuf[l] *= term.coeff2[l];
          detail_quant::fft2(padbuf.data(), NT, NX, false);
          // band truncation, left-hand factors tau^p xi^q, accumulate
          for (int k = 0; k < nt; ++k) {
            if (k == nt / 2) continue;
            const int kk = detail_fft::signed_mode(k, nt);
            const int kp = (kk + NT) % NT;
            const double tp =
                std::pow(tau[static_cast<std::size_t>(k)], p);
            for (int m = 0; m < nx; ++m) {
              if (m == nx / 2) continue;
              const int mm = detail_fft::signed_mode(m, nx);
              const int mp = (mm + NX) % NX;
              acc[static_cast<std::size_t>(k) * nx + m] +=
                  wgt * tp *
                  std::pow(xi[static_cast<std::size_t>(m)], q) *
                  padbuf[static_cast<std::size_t>(kp) * NX + mp];
            }
          }
        }
      }
    }
    detail_quant::fft2(acc.data(), nt, nx, true);

    GridFunction out(grid);
    for (std::size_t l = 0; l < n; ++l) out.v[l] = acc[l];

    // - h^2 Q0, slice-wise in t
    for (int i = 0; i < nt; ++i) {
      const std::complex<double>* slice =
          psi.v.data() + static_cast<std::size_t>(i) * nx;
      std::complex<double>* oslice =
          out.v.data() + static_cast<std::size_t>(i) * nx;
      for (int a = 0; a < nx; ++a) {
        std::complex<double> q0acc(0.0, 0.0);
        for (int b = 0; b < nx; ++b) q0acc += q0_block(a, b) * slice[b];
        oslice[a] -= (h * h) * q0acc;
      }
    }
    return out;
  }

  // Materialized matrix for small grids (oracle comparisons, symmetry
  // audits).
  Eigen::MatrixXcd dense_matrix() const {
    const int n = grid.n_t * grid.n_x;
    if (n > 4096)
      throw std::invalid_argument(
          "dense_matrix: grid too large to materialize");
    Eigen::MatrixXcd M(n, n);
    GridFunction e(grid);
    for (int j = 0; j < n; ++j) {
      std::fill(e.v.begin(), e.v.end(), std::complex<double>(0.0, 0.0));
      e.v[static_cast<std::size_t>(j)] = 1.0;
      GridFunction col = apply(e);
      for (int i = 0; i < n; ++i) M(i, j) = col.v[static_cast<std::size_t>(i)];
    }
    return M;
  }
};

// Assemble the h-scaled operator (hD_t)^2 - h^2 Q0 + Op_h(q). Each fiber
// monomial a tau^j xi^k enters with h^{j+k} through its symmetrized
// operator ordering
//   2^{-(j+k)} sum_{p<=j, q<=k} C(j,p) C(k,q) D_t^p D_x^q a D_t^{j-p} D_x^{k-q},
// whose Fourier transition weights sit exactly at the midpoint frequencies
// ((tau+tau')/2)^j ((xi+xi')/2)^k — the Weyl quantization of the monomial.
// Coefficient products are dealiased: the factor is sampled on the doubled
// lattice, applied by zero-padded spectral interpolation, and truncated
// back to the open momentum band.
inline SparseOperator assemble(const SpacetimeModel& m, const GridSpec& g,
                               double h) {
  g.validate();
  if (!(h > 0.0) || !(h <= 1.0))
    throw std::invalid_argument("assemble: h must lie in (0, 1]");
  SparseOperator op;
  op.grid = g;
  op.h = h;
  op.q0_block = build_q0_block(m, g);

  const int NT = 2 * g.n_t, NX = 2 * g.n_x;
  const int degs[6][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  for (const auto& d : degs) {
    const Expr& e = m.coeff(d[0], d[1]);
    FiberTerm term;
    term.deg_t = d[0];
    term.deg_x = d[1];
    term.coeff2.resize(static_cast<std::size_t>(NT) * NX);
    bool nonzero = false;
    for (int l = 0; l < NT; ++l) {
      const double t = -g.L + l * (2.0 * g.L / NT);
      for (int a = 0; a < NX; ++a) {
        const double x = a * (kTwoPi / NX);
        const double v = e.eval(t, x);
        if (!std::isfinite(v))
          throw EvalError("assemble: non-finite coefficient sample");
        term.coeff2[static_cast<std::size_t>(l) * NX + a] = v;
        if (v != 0.0) nonzero = true;
      }
    }
    if (nonzero) op.terms.push_back(std::move(term));
  }
  op.symmetric = true;
  return op;
}

// Slice-wise energy-window calculus: on each time slice, multiplies mode k
// of the spatial kinetic eigenbasis by chi2((h^2 mu_k - 1)/lambda(t)), with
// the width held constant below |t| = 1 (recorded extension).
struct SliceMultiplier {
  GridSpec grid;
  double h = 1.0;
  Eigen::MatrixXd evecs;
  Eigen::VectorXd evals;
  std::vector<Eigen::VectorXd> factors;  // [n_t] vectors of length n_x

  GridFunction apply(const GridFunction& psi) const {
    GridFunction out(grid);
    Eigen::VectorXcd slice(grid.n_x), hat(grid.n_x);
    for (int i = 0; i < grid.n_t; ++i) {
      for (int a = 0; a < grid.n_x; ++a) slice[a] = psi.at(i, a);
      hat = evecs.transpose() * slice;
      for (int k = 0; k < grid.n_x; ++k) hat[k] *= factors[i][k];
      slice = evecs * hat;
      for (int a = 0; a < grid.n_x; ++a) out.at(i, a) = slice[a];
    }
    return out;
  }

  // Simultaneous-diagonalization certificate: the slice operator and the
  // kinetic block share the eigenbasis, so their commutator is governed by
  // max_k |f_k mu_k - mu_k f_k| — identically zero.
  double commutator_certificate() const {
    double worst = 0.0;
    for (const auto& f : factors)
      for (int k = 0; k < evals.size(); ++k)
        worst = std::max(worst,
                         std::fabs(f[k] * evals[k] - evals[k] * f[k]));
    return worst;
  }

  Eigen::MatrixXd slice_matrix(int i) const {
    return evecs * factors[static_cast<std::size_t>(i)].asDiagonal() *
           evecs.transpose();
  }
};

inline SliceMultiplier q0_calculus(const SpacetimeModel& m, const GridSpec& g,
                                   double h, const EscapeParams& ep) {
  g.validate();
  validate_escape_params(ep);
  SliceMultiplier sm;
  sm.grid = g;
  sm.h = h;
  Eigen::MatrixXd q0 = build_q0_block(m, g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q0);
  sm.evecs = es.eigenvectors();
  sm.evals = es.eigenvalues();
  sm.factors.resize(static_cast<std::size_t>(g.n_t),
                    Eigen::VectorXd(g.n_x));
  for (int i = 0; i < g.n_t; ++i) {
    const double lam = lambda_weight_ext(ep, g.t_at(i));
    for (int k = 0; k < g.n_x; ++k)
      sm.factors[static_cast<std::size_t>(i)][k] =
          chi2((h * h * sm.evals[k] - 1.0) / lam);
  }
  return sm;
}

// Separable symbol: finite sum of products u(t) * v(h tau) * w(h^2 mu).
// v receives the h-scaled time frequency; w receives the h^2-scaled
// spatial kinetic eigenvalue.
struct SeparableTerm {
  std::function<double(double)> u_t;
  std::function<double(double)> v_tau;
  std::function<double(double)> w_mu;
};

struct SeparableSymbol {
  std::vector<SeparableTerm> terms;
  double required_L = 0.0;  // smallest admissible grid half-width
};

// The time/fiber localizer as a separable symbol.
inline SeparableSymbol separable_localizer(const EllipticityConstants& c) {
  SeparableSymbol s;
  s.required_L = 2.0 * c.T;
  const double delta = c.delta;
  const double T = c.T;
  s.terms.push_back(
      {[T](double t) { return chi1(1.0 - std::fabs(t) / T); },
       [delta](double htau) {
         return chi2(std::fabs(htau * htau - 1.0) / delta);
       },
       [delta](double h2mu) { return chi2(std::fabs(h2mu - 1.0) / delta); }});
  return s;
}

// Escape observable with the slowly-varying width frozen at its far-field
// value (2 delta incoming, delta outgoing) so the symbol separates.
inline SeparableSymbol separable_escape_frozen(const EscapeParams& ep) {
  validate_escape_params(ep);
  SeparableSymbol s;
  s.required_L = 4.0 * ep.T;
  const double lam_bar =
      (ep.direction == EscapeDirection::Incoming) ? 2.0 * ep.delta : ep.delta;
  for (int br : {+1, -1}) {
    const double sb = static_cast<double>(br);
    const int sigma1 = (ep.direction == EscapeDirection::Incoming) ? -br : br;
    const double s1 = static_cast<double>(sigma1);
    const double T = ep.T;
    const double gw = ep.gamma_w;
    const bool incoming = ep.direction == EscapeDirection::Incoming;
    s.terms.push_back(
        {[s1, T, gw, incoming](double t) {
           const double z1 = chi1(-s1 * t / T + 1.0);
           if (z1 == 0.0) return 0.0;
           const double w = incoming ? std::pow(std::fabs(t), gw)
                                     : std::pow(std::fabs(t), -gw);
           return w * z1;
         },
         [sb, lam_bar](double htau) {
           return chi2((sb * htau - 1.0) / lam_bar);
         },
         [lam_bar](double h2mu) { return chi2((h2mu - 1.0) / lam_bar); }});
  }
  return s;
}

// Applies a separable symbol in the symmetric ordering
// u^{1/2} . v(hD_t) . w(h^2 Q0) . u^{1/2} per term. The time multiplier
// uses a zero-padded transform (factor two) so the truncated line does not
// wrap; the spatial factor acts through the kinetic eigenbasis.
inline GridFunction op_h_multiplier(const SeparableSymbol& sym,
                                    const SpacetimeModel& m,
                                    const GridSpec& g, double h,
                                    const GridFunction& psi) {
  g.validate();
  if (sym.terms.empty())
    throw std::invalid_argument("op_h_multiplier: symbol has no terms");
  if (g.L < sym.required_L)
    throw std::invalid_argument(
        "op_h_multiplier: grid half-width below the symbol's requirement");
  Eigen::MatrixXd q0 = build_q0_block(m, g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q0);
  const Eigen::MatrixXd& V = es.eigenvectors();
  const Eigen::VectorXd& mu = es.eigenvalues();

  GridFunction out(g);
  const int np = 2 * g.n_t;  // zero-padded length
  std::vector<std::complex<double>> buf(np);
  Eigen::VectorXcd slice(g.n_x), hat(g.n_x);

  for (const auto& term : sym.terms) {
    // u^{1/2} on the right
    GridFunction tmp(g);
    std::vector<double> su(static_cast<std::size_t>(g.n_t));
    for (int i = 0; i < g.n_t; ++i) {
      const double u = term.u_t(g.t_at(i));
      if (u < 0.0)
        throw std::invalid_argument(
            "op_h_multiplier: time factor must be nonnegative");
      su[static_cast<std::size_t>(i)] = std::sqrt(u);
      for (int a = 0; a < g.n_x; ++a)
        tmp.at(i, a) = su[static_cast<std::size_t>(i)] * psi.at(i, a);
    }
    // v(hD_t) by zero-padded multiplier, per x-column
    for (int a = 0; a < g.n_x; ++a) {
      for (int i = 0; i < g.n_t; ++i) buf[i] = tmp.at(i, a);
      std::fill(buf.begin() + g.n_t, buf.end(),
                std::complex<double>(0.0, 0.0));
      detail_fft::fft_inplace(buf.data(), np, false);
      for (int k = 0; k < np; ++k) {
        const int kk = detail_fft::signed_mode(k, np);
        const double tau = kPi * kk / (2.0 * g.L);  // padded period 4L
        buf[k] *= term.v_tau(h * tau);
      }
      detail_fft::fft_inplace(buf.data(), np, true);
      for (int i = 0; i < g.n_t; ++i) tmp.at(i, a) = buf[i];
    }
    // w(h^2 Q0) through the eigenbasis, per t-slice
    for (int i = 0; i < g.n_t; ++i) {
      for (int a = 0; a < g.n_x; ++a) slice[a] = tmp.at(i, a);
      hat = V.transpose() * slice;
      for (int k = 0; k < g.n_x; ++k) hat[k] *= term.w_mu(h * h * mu[k]);
      slice = V * hat;
      for (int a = 0; a < g.n_x; ++a) tmp.at(i, a) = slice[a];
    }
    // u^{1/2} on the left, accumulate
    for (int i = 0; i < g.n_t; ++i)
      for (int a = 0; a < g.n_x; ++a)
        out.at(i, a) += su[static_cast<std::size_t>(i)] * tmp.at(i, a);
  }
  return out;
}

// Normalized discrete Gaussian packet
//   e^{i(t tau0 + x xi0)/h} exp(-(t-t0)^2/2s_t^2 - d(x,x0)^2/2s_x^2)
// with d the circle distance. Preconditions: the center keeps 3 s_t from
// the time boundary and s_x < pi/3; the discrete mass in the outermost time
// rows must stay below 1e-6 of the total.
inline GridFunction wave_packet(const GridSpec& g, const PhasePoint& center,
                                std::pair<double, double> widths, double h) {
  g.validate();
  const double st = widths.first, sx = widths.second;
  if (!(st > 0.0) || !(sx > 0.0))
    throw std::invalid_argument("wave_packet: widths must be positive");
  if (!(sx < kPi / 3.0))
    throw std::invalid_argument("wave_packet: x-width must stay below pi/3");
  if (!(std::fabs(center.t) <= g.L - 3.0 * st))
    throw std::invalid_argument(
        "wave_packet: center must keep three widths from the time boundary");
  if (!(h > 0.0)) throw std::invalid_argument("wave_packet: h must be positive");

  GridFunction psi(g);
  for (int i = 0; i < g.n_t; ++i) {
    const double t = g.t_at(i);
    const double et = std::exp(-(t - center.t) * (t - center.t) /
                               (2.0 * st * st));
    for (int a = 0; a < g.n_x; ++a) {
      const double x = g.x_at(a);
      double d = std::fmod(x - center.x, kTwoPi);
      if (d > kPi) d -= kTwoPi;
      if (d < -kPi) d += kTwoPi;
      const double ex = std::exp(-d * d / (2.0 * sx * sx));
      const double phase = (t * center.tau + x * center.xi) / h;
      psi.at(i, a) =
          et * ex * std::exp(std::complex<double>(0.0, phase));
    }
  }
  double total = 0.0, boundary = 0.0;
  for (int i = 0; i < g.n_t; ++i)
    for (int a = 0; a < g.n_x; ++a) {
      const double w = std::norm(psi.at(i, a));
      total += w;
      if (i == 0 || i == g.n_t - 1) boundary += w;
    }
  if (!(total > 0.0))
    throw std::domain_error("wave_packet: vanishing discrete mass");
  if (boundary / total > 1e-6)
    throw std::domain_error(
        "wave_packet: packet clipped by the time boundary beyond 1e-6 mass");
  const double scale = 1.0 / (std::sqrt(total * g.cell()));
  for (auto& z : psi.v) z *= scale;
  return psi;
}

}  // namespace kglab
