#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kglab/chi.hpp"

using kglab::chi1;
using kglab::chi1_deriv;
using kglab::chi2;
using kglab::chi2_deriv;

namespace {

// 4th-order central finite difference of a scalar function; the independent
// oracle for the exact jet derivatives.
template <typename F>
double fd_central(F f, double s, double h) {
  return (-f(s + 2 * h) + 8 * f(s + h) - 8 * f(s - h) + f(s - 2 * h)) / (12 * h);
}

}  // namespace

TEST_CASE("chi1 region values") {
  CHECK(chi1(-5.0) == 1.0);
  CHECK(chi1(-1.0) == 1.0);
  CHECK(chi1(0.0) == 0.0);
  CHECK(chi1(3.0) == 0.0);
  // symmetry of the f/(f+f) construction makes the midpoint exact
  CHECK(chi1(-0.5) == 0.5);
  // interior: strictly between 0 and 1 (doubles saturate within ~1e-3 of the
  // junctions, where the true value differs from the plateau by < 1e-300)
  for (double s = -0.95; s < -0.049; s += 0.037) {
    CHECK(chi1(s) > 0.0);
    CHECK(chi1(s) < 1.0);
  }
}

TEST_CASE("chi1 partition identity chi1(s) + chi1(-1-s) == 1") {
  for (double s = -1.2; s <= 0.2; s += 0.013)
    CHECK(std::fabs(chi1(s) + chi1(-1.0 - s) - 1.0) < 1e-15);
}

TEST_CASE("chi1 monotone decreasing, chi1' at midpoint is -2") {
  for (double s = -0.99; s < 0.0; s += 0.01) CHECK(chi1_deriv(1, s) <= 0.0);
  // closed form at s = -1/2: A = B = e^{-2}, chi1' = -2 exactly
  CHECK(chi1_deriv(1, -0.5) == Catch::Approx(-2.0).epsilon(1e-13));
}

TEST_CASE("chi1 jet derivatives agree with the finite-difference oracle") {
  const double pts[] = {-0.93, -0.75, -0.5, -0.31, -0.12, -0.05};
  for (int k = 1; k <= 5; ++k) {
    for (double s : pts) {
      auto fk1 = [k](double u) { return chi1_deriv(k - 1, u); };
      const double fd = fd_central(fk1, s, 1e-3);
      const double exact = chi1_deriv(k, s);
      // the FD oracle itself carries ~1e-5 relative truncation noise on the
      // large high-order derivatives, so the band widens with k
      const double tol = (k <= 2) ? 1e-6 * (1.0 + std::fabs(fd))
                                  : 3e-5 * (1.0 + std::fabs(fd));
      CHECK(std::fabs(exact - fd) <= tol);
    }
  }
}

TEST_CASE("chi1 junction smoothness up to 4th derivative") {
  for (int k = 0; k <= 4; ++k) {
    const double ref1 = (k == 0) ? 1.0 : 0.0;
    const double ref0 = 0.0;
    for (double eps : {1e-2, 1e-3}) {
      CHECK(std::fabs(chi1_deriv(k, -1.0 + eps) - ref1) < 1e-20);
      CHECK(std::fabs(chi1_deriv(k, -1.0 - eps) - ref1) < 1e-20);
      if (k > 0) CHECK(std::fabs(chi1_deriv(k, -eps)) < 1e-20);
      CHECK(std::fabs(chi1_deriv(k, eps) - (k == 0 ? 0.0 : ref0)) == 0.0);
    }
  }
}

TEST_CASE("chi2 plateau, support, evenness") {
  CHECK(chi2(0.0) == 1.0);
  CHECK(chi2(1.0) == 1.0);
  CHECK(chi2(-1.0) == 1.0);
  CHECK(chi2(2.0) == 0.0);
  CHECK(chi2(-2.0) == 0.0);
  CHECK(chi2(2.7) == 0.0);
  CHECK(chi2(1.5) > 0.0);
  CHECK(chi2(1.5) < 1.0);
  for (double s = -2.5; s <= 2.5; s += 0.017) CHECK(chi2(s) == chi2(-s));
}

TEST_CASE("s * chi2'(s) <= 0 everywhere") {
  for (double s = -2.5; s <= 2.5; s += 0.011)
    CHECK(s * chi2_deriv(1, s) <= 0.0);
}

TEST_CASE("chi2 derivatives agree with the finite-difference oracle") {
  const double pts[] = {-1.8, -1.5, -1.2, 1.1, 1.5, 1.9};
  for (int k = 1; k <= 4; ++k) {
    for (double s : pts) {
      auto fk1 = [k](double u) { return chi2_deriv(k - 1, u); };
      const double fd = fd_central(fk1, s, 1e-3);
      const double exact = chi2_deriv(k, s);
      const double tol = (k <= 2) ? 1e-6 * (1.0 + std::fabs(fd))
                                  : 1e-5 * (1.0 + std::fabs(fd));
      CHECK(std::fabs(exact - fd) <= tol);
    }
  }
}

TEST_CASE("derivative order guard") {
  CHECK_THROWS_AS(chi1_deriv(9, -0.5), std::invalid_argument);
  CHECK_THROWS_AS(chi2_deriv(-1, 0.5), std::invalid_argument);
}
