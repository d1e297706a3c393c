#pragma once

// Hand-rolled radix-2 complex FFT (grids are power-of-two by construction)
// plus the discrete momentum conventions shared by every spectral operator:
// mode k of an n-point transform carries signed frequency k for k < n/2 and
// k - n otherwise; first-order derivative multipliers zero the top (n/2)
// mode so that real fields map to real fields.

#include <complex>
#include <utility>

namespace kglab {

inline constexpr double kPi = 3.14159265358979323846264338327950288;

namespace detail_fft {

// In-place iterative radix-2 FFT; forward uses e^{-2 pi i jk/n}, inverse
// scales by 1/n. n must be a power of two.
inline void fft_inplace(std::complex<double>* a, int n, bool inverse) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / len * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double s = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= s;
  }
}

// Signed frequency of mode k in an n-point transform.
inline int signed_mode(int k, int n) { return (k < n / 2) ? k : k - n; }

}  // namespace detail_fft

}  // namespace kglab
