#pragma once

#include "bspec/types.hpp"

namespace bspec {

/// Weight rho_m for the weighted L^2 spaces. m = infinity (Gaussian weight
/// e^{r/4}) is a distinct case, not a large finite exponent.
struct WeightSpec {
  Real m = std::numeric_limits<Real>::infinity();

  static WeightSpec infinite() { return WeightSpec{}; }
  static WeightSpec finite(Real m_value) {
    if (!(m_value > 1.0)) throw std::invalid_argument("WeightSpec: need m > 1");
    return WeightSpec{m_value};
  }
  bool is_infinite() const { return std::isinf(m); }

  /// rho_m(r2) with r2 = |x_h|^2.
  Real rho(Real r2) const {
    if (is_infinite()) return std::exp(r2 / 4.0);
    return std::pow(1.0 + r2 / (4.0 * m), m);
  }
};

/// Circulation (Reynolds) number of the vortex family.
struct CirculationParam {
  Real alpha = 0.0;
};

/// Gaussian vortex profile g(x_h) = e^{-|x_h|^2/4} / (4 pi).
Real gaussian_profile(const Vector2r& xh);
Real gaussian_profile_r2(Real r2);

/// Azimuthal velocity factor u^g(r2) = (1 - e^{-r2/4}) / (2 pi r2), with the
/// removable singularity at r2 = 0 handled by a short Taylor series.
Real ug_scalar(Real r2);
/// d/d(r2) of ug_scalar, same series switch.
Real ug_scalar_derivative(Real r2);

/// Velocity of the unit-circulation vortex: u^g(|x_h|^2) * (-x2, x1).
Vector2r burgers_velocity(const Vector2r& xh);

/// Background strain (-x1/2, -x2/2, x3), unit strain rate.
Vector3r strain_velocity(const Vector3r& x);

/// a(t) = 1 - e^{-t}; controls all parabolic smoothing factors.
Real a_of_t(Real t);

}  // namespace bspec
