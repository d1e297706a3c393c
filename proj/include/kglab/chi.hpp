#pragma once
// Smooth cutoff functions used throughout the library.
//
//   chi1: monotone step, == 1 on (-inf,-1], == 0 on [0,+inf), strictly
//         decreasing in between; built from f(u) = exp(-1/u) for u > 0.
//   chi2(s) = chi1(|s|-2): even plateau cutoff, == 1 on [-1,1], supported
//         in [-2,2], with s*chi2'(s) <= 0.
//
// Derivatives up to order kMaxChiDeriv are exact: they are computed with
// truncated Taylor (jet) arithmetic on the closed form, not by finite
// differences.  chi1_deriv(0, s) == chi1(s).

#include <array>
#include <cmath>
#include <stdexcept>

namespace kglab {

inline constexpr int kMaxChiDeriv = 8;

namespace detail {

// Taylor coefficients c[k] = g^(k)(s0)/k! of a scalar quantity g at a fixed
// base point, truncated at order `n`.
struct Jet {
  std::array<double, kMaxChiDeriv + 1> c{};
  int n = 1;

  static Jet constant(double v, int n) {
    Jet j;
    j.n = n;
    j.c[0] = v;
    return j;
  }
  static Jet seed(double v, int n) {  // the variable s itself
    Jet j;
    j.n = n;
    j.c[0] = v;
    if (n > 1) j.c[1] = 1.0;
    return j;
  }
};

inline Jet operator+(const Jet& a, const Jet& b) {
  Jet r;
  r.n = a.n;
  for (int k = 0; k < r.n; ++k) r.c[k] = a.c[k] + b.c[k];
  return r;
}

inline Jet operator*(const Jet& a, const Jet& b) {
  Jet r;
  r.n = a.n;
  for (int k = 0; k < r.n; ++k) {
    double s = 0;
    for (int j = 0; j <= k; ++j) s += a.c[j] * b.c[k - j];
    r.c[k] = s;
  }
  return r;
}

inline Jet operator/(const Jet& a, const Jet& b) {
  Jet r;
  r.n = a.n;
  for (int k = 0; k < r.n; ++k) {
    double s = a.c[k];
    for (int j = 1; j <= k; ++j) s -= b.c[j] * r.c[k - j];
    r.c[k] = s / b.c[0];
  }
  return r;
}

inline Jet jet_exp(const Jet& a) {
  Jet r;
  r.n = a.n;
  r.c[0] = std::exp(a.c[0]);
  for (int k = 1; k < r.n; ++k) {
    double s = 0;
    for (int j = 1; j <= k; ++j) s += j * a.c[j] * r.c[k - j];
    r.c[k] = s / k;
  }
  return r;
}

// chi1 as a jet of order n-1 at base point s.  Outside the open transition
// interval (-1,0) the function is locally constant, so the jet is constant.
inline Jet chi1_jet(double s, int n) {
  if (s <= -1.0) return Jet::constant(1.0, n);
  if (s >= 0.0) return Jet::constant(0.0, n);
  const Jet js = Jet::seed(s, n);
  const Jet one = Jet::constant(1.0, n);
  // A = f(-s) = exp(1/s),  B = f(s+1) = exp(-1/(s+1))
  const Jet A = jet_exp(one / js);
  const Jet B = jet_exp(Jet::constant(-1.0, n) / (js + one));
  return A / (A + B);
}

}  // namespace detail

inline double chi1(double s) {
  if (s <= -1.0) return 1.0;
  if (s >= 0.0) return 0.0;
  const double a = std::exp(1.0 / s);
  const double b = std::exp(-1.0 / (s + 1.0));
  return a / (a + b);
}

// k-th derivative of chi1 (k = 0 gives the value), exact up to roundoff.
inline double chi1_deriv(int k, double s) {
  if (k < 0 || k > kMaxChiDeriv)
    throw std::invalid_argument("chi1_deriv: order out of range [0,8]");
  if (k == 0) return chi1(s);
  if (s <= -1.0 || s >= 0.0) return 0.0;
  detail::Jet j = detail::chi1_jet(s, k + 1);
  double fact = 1.0;
  for (int i = 2; i <= k; ++i) fact *= i;
  return j.c[k] * fact;
}

inline double chi2(double s) { return chi1(std::fabs(s) - 2.0); }

// k-th derivative of chi2.  chi2 is even; for s < 0 the chain rule through
// |s| contributes (-1)^k.  Near s = 0 the function is identically 1.
inline double chi2_deriv(int k, double s) {
  if (k < 0 || k > kMaxChiDeriv)
    throw std::invalid_argument("chi2_deriv: order out of range [0,8]");
  if (k == 0) return chi2(s);
  if (std::fabs(s) <= 1.0 || std::fabs(s) >= 2.0) return 0.0;
  const double d = chi1_deriv(k, std::fabs(s) - 2.0);
  return (s < 0 && (k % 2 == 1)) ? -d : d;
}

}  // namespace kglab
