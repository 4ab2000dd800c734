#include "bspec/fields.hpp"

#include <cmath>

namespace bspec {

namespace {
// Series switch for u^g: below this, evaluate the Taylor expansion of
// (1 - e^{-x})/x at x = r2/4. Six terms keep the cancellation error of the
// closed form out of double precision.
constexpr Real kSeriesSwitch = 1e-3;

// (1 - e^{-x})/x = sum_{j>=0} (-1)^j x^j / (j+1)!
Real expm1_ratio(Real x) {
  Real term = 1.0, sum = 1.0;
  for (int j = 1; j < 6; ++j) {
    term *= -x / (j + 1);
    sum += term;
  }
  return sum;
}

// d/dx [(1 - e^{-x})/x] series.
Real expm1_ratio_derivative(Real x) {
  Real sum = 0.0, pow = 1.0;
  Real fact = 1.0;  // (j+1)!
  for (int j = 1; j < 7; ++j) {
    fact *= (j + 1);
    const Real coeff = (j % 2 == 0 ? 1.0 : -1.0) * j / fact;
    sum += coeff * pow;
    pow *= x;
  }
  return sum;
}
}  // namespace

Real gaussian_profile_r2(Real r2) { return std::exp(-r2 / 4.0) / (4.0 * kPi); }

Real gaussian_profile(const Vector2r& xh) { return gaussian_profile_r2(xh.squaredNorm()); }

Real ug_scalar(Real r2) {
  if (r2 < 0) throw std::domain_error("ug_scalar: negative |x_h|^2");
  const Real x = r2 / 4.0;
  if (r2 < kSeriesSwitch) return expm1_ratio(x) / (8.0 * kPi);
  return (1.0 - std::exp(-x)) / (2.0 * kPi * r2);
}

Real ug_scalar_derivative(Real r2) {
  if (r2 < 0) throw std::domain_error("ug_scalar_derivative: negative |x_h|^2");
  const Real x = r2 / 4.0;
  // The closed form cancels like eps/x^2, so the series takes over earlier
  // than for the value itself.
  if (r2 < 1e-2) return expm1_ratio_derivative(x) / (32.0 * kPi);
  return (std::exp(-x) * (1.0 + x) - 1.0) / (2.0 * kPi * r2 * r2);
}

Vector2r burgers_velocity(const Vector2r& xh) {
  const Real u = ug_scalar(xh.squaredNorm());
  return Vector2r(-u * xh.y(), u * xh.x());
}

Vector3r strain_velocity(const Vector3r& x) {
  return Vector3r(-0.5 * x.x(), -0.5 * x.y(), x.z());
}

Real a_of_t(Real t) {
  if (t < 0) throw std::domain_error("a_of_t: negative time");
  return -std::expm1(-t);
}

}  // namespace bspec
