#pragma once

// exp and log1p built only from IEEE add, mul, div and fused multiply-add,
// so a vector implementation that repeats the same operations per lane
// returns the same bits. Accuracy is within a couple of ulp of libm.

#include <bit>
#include <cmath>
#include <cstdint>

namespace specgd::detail {

namespace det {

inline constexpr double kLog2e = 0x1.71547652b82fep0;
inline constexpr double kLn2Hi = 0x1.62e42fefa39efp-1;
inline constexpr double kLn2Lo = 0x1.abc9e3b39803fp-56;
inline constexpr double kShifter = 0x1.8p52;
inline constexpr double kExpMin = -745.2;
inline constexpr double kSqrt2 = 0x1.6a09e667f3bcdp0;

// Taylor coefficients 1/k!, k = 13 down to 2.
inline constexpr double kExpPoly[12] = {
    1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0, 1.0 / 40320.0,
    1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,      1.0 / 24.0,      1.0 / 6.0,      0.5};

// log(1 + f) = f - f^2/2 + s (f^2/2 + R(s^2)), s = f / (2 + f).
inline constexpr double kLg1 = 6.666666666666735130e-01;
inline constexpr double kLg2 = 3.999999999940941908e-01;
inline constexpr double kLg3 = 2.857142874366239149e-01;
inline constexpr double kLg4 = 2.222219843214978396e-01;
inline constexpr double kLg5 = 1.818357216161805012e-01;
inline constexpr double kLg6 = 1.531383769920937332e-01;
inline constexpr double kLg7 = 1.479819860511658591e-01;

inline double pow2(std::int64_t n) { return std::bit_cast<double>(static_cast<std::uint64_t>(n + 1023) << 52); }

}  // namespace det

/// e^x for x <= 0.
inline double exp_nonpositive(double x) {
  using namespace det;
  if (!(x >= kExpMin)) return x < kExpMin ? 0.0 : x;
  const double kd = std::fma(x, kLog2e, kShifter) - kShifter;
  double r = std::fma(-kd, kLn2Hi, x);
  r = std::fma(-kd, kLn2Lo, r);
  double p = kExpPoly[0];
  for (int i = 1; i < 12; ++i) p = std::fma(p, r, kExpPoly[i]);
  p = std::fma(p, r, 1.0);
  p = std::fma(p, r, 1.0);
  const auto n = static_cast<std::int64_t>(kd);
  const std::int64_t n1 = n >> 1;
  return p * pow2(n1) * pow2(n - n1);
}

/// log(1 + e) for e in [0, 1], also returning 1 / (1 + e) through inv.
/// One division serves both reciprocals.
inline double log1p_unit(double e, double& inv) {
  using namespace det;
  const double u = 1.0 + e;
  const bool big = u > kSqrt2;
  const double m = big ? u * 0.5 : u;
  const double k = big ? 1.0 : 0.0;
  const double f = m - 1.0;
  const double den = 2.0 + f;
  const double q = 1.0 / (u * den);
  inv = den * q;
  const double c = (e - (u - 1.0)) * inv;
  const double s = f * (u * q);
  const double z = s * s;
  const double w = z * z;
  const double t1 = w * std::fma(w, std::fma(w, kLg6, kLg4), kLg2);
  const double t2 = z * std::fma(w, std::fma(w, std::fma(w, kLg7, kLg5), kLg3), kLg1);
  const double R = t2 + t1;
  const double hfsq = 0.5 * f * f;
  const double lg = k * kLn2Hi - ((hfsq - (s * (hfsq + R) + (k * kLn2Lo + c))) - f);
  return lg;
}

inline double log1p_unit(double e) {
  double inv;
  return log1p_unit(e, inv);
}

}  // namespace specgd::detail
