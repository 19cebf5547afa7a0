#pragma once

#include <cmath>
#include <numbers>

namespace ccgp {

/// Scaled complementary error function erfcx(x) = exp(x^2) * erfc(x), x >= 0.
///
/// For moderate x the direct product is exact to double precision; past the
/// point where erfc underflows we switch to the asymptotic expansion
/// erfcx(x) ~ (1 - 1/(2x^2) + 3/(4x^4) - ...) / (x sqrt(pi)).
inline double erfcx_nonneg(double x) {
  if (x < 25.0) return std::exp(x * x) * std::erfc(x);
  const double ix2 = 1.0 / (x * x);
  const double s =
      1.0 + ix2 * (-0.5 + ix2 * (0.75 + ix2 * (-1.875 + ix2 * 6.5625)));
  return s * std::numbers::inv_sqrtpi_v<double> / x;
}

/// exp(E) * (erf(beta) - erf(alpha)) without forming exp(E).
///
/// Rewrites the difference as exp(E)*erfc(alpha) - exp(E)*erfc(beta) and
/// evaluates each term through erfcx, so only exp(E - z^2) is ever formed.
/// Callers arrange E - alpha^2 <= 0 and E - beta^2 <= 0; the residual
/// 2*exp(E) term appears only when alpha and beta straddle zero, in which
/// case E itself is nonpositive, or cancels when both are negative.
inline double exp_erf_diff(double E, double beta, double alpha) {
  const double ca = alpha < 0.0 ? 2.0 : 0.0;
  const double cb = beta < 0.0 ? 2.0 : 0.0;
  const double sa = alpha < 0.0
                        ? -std::exp(E - alpha * alpha) * erfcx_nonneg(-alpha)
                        : std::exp(E - alpha * alpha) * erfcx_nonneg(alpha);
  const double sb = beta < 0.0
                        ? -std::exp(E - beta * beta) * erfcx_nonneg(-beta)
                        : std::exp(E - beta * beta) * erfcx_nonneg(beta);
  double out = sa - sb;
  if (ca != cb) out += (ca - cb) * std::exp(E);
  return out;
}

/// exp(E) * (erf(x) + erf(y)), same stabilization.
inline double exp_erf_sum(double E, double x, double y) {
  return exp_erf_diff(E, x, -y);
}

}  // namespace ccgp
