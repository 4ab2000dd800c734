#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "bspec/operators.hpp"

namespace bspec {

/// Time series of weighted norms along an evolution, with fitted rates.
struct EvolutionTrace {
  ArrayXr times;
  ArrayXr norm_h;       // horizontal components (zero for scalar runs)
  ArrayXr norm_3;       // vertical / scalar component
  ArrayXr k_traj;       // wavenumber trajectory (zero when not applicable)
  ArrayXr circulation;  // of the vertical component
  Real alpha = 0, k0 = 0, dt = 0;
  WeightSpec m;
  std::vector<std::pair<Real, ModeField>> snapshots;
};

struct RateFit {
  Real rate = 0;
  Real halfwidth = 0;
};

/// Least-squares slope of log(norm) against t over [t_a, t_b]; the halfwidth
/// is twice the standard error from the residual spread.
RateFit decay_rate_fit(const ArrayXr& times, const ArrayXr& norms, Real t_a, Real t_b);
RateFit decay_rate_fit(const EvolutionTrace& trace, Real t_a, Real t_b,
                       bool vertical = true);

/// Quadrature of the vertical vorticity over the plane (mode 0 only).
Real circulation(const ModeField& omega3);

/// Exact heat-kernel action of the 2D Fokker-Planck semigroup, evaluated by
/// radial quadrature of the explicit kernel (azimuthal part summed into a
/// scaled modified-Bessel factor). Scalar fields, t > 0.
ModeField kernel_step_h(const ModeField& f, Real t);

/// Exact kernel of the vertical convection-diffusion semigroup on sampled
/// line data: out[i] = step applied at out_pts[i], integrating the samples
/// (pts, values) by the trapezoid rule. pts must be uniform and wide enough
/// to cover x3 e^{-t} +- several widths sqrt(a(2t)).
VectorXc kernel_step_3(const ArrayXr& pts, const VectorXc& values, Real t,
                       const ArrayXr& out_pts);

/// Split-step propagator of the stretched-mode system
///   X' = G(alpha, k(t)) X,  k(t) = k0 e^{-t},
/// block by block: exact half-steps of the diagonal Fokker-Planck part,
/// classical RK4 stages for the interaction part, and the analytic
/// exp(-int k^2) factor. The coupling operator is interpolated in k from
/// Chebyshev-Lobatto samples on [0, k0], validated against a direct build.
class StretchedPropagator {
 public:
  StretchedPropagator(GridPtr grid, Real alpha, Real k0, Real dt);

  const OperatorMatrix& layout() const { return layout_; }
  int block_count() const { return static_cast<int>(layout_.blocks.size()); }
  Real dt() const { return dt_; }
  Real k_of(Real t) const { return k0_ * std::exp(-t); }

  /// Advance the slab X of block bi from t0 over n_steps sub-steps.
  void advance(int bi, MatrixXc& X, Real t0, int n_steps) const;

  /// Suggested stable sub-step for a given circulation number.
  static Real suggested_dt(Real alpha);

 private:
  struct HalfStep {
    MatrixXr Q;       // family eigenvectors
    VectorXr lambda;  // family eigenvalues
  };
  MatrixXc interaction(int bi, Real t) const;

  GridPtr grid_;
  Real alpha_ = 0, k0_ = 0, dt_ = 0;
  OperatorMatrix layout_;                 // generator at k = 0 (defines blocks)
  std::vector<MatrixXc> lambda_part_;     // G(alpha,0) minus diagonal part
  std::vector<HalfStep> half_;            // per family
  std::vector<std::vector<MatrixXc>> h_samples_;  // [cheb node][block]
  ArrayXr h_nodes_;                       // Chebyshev-Lobatto k values
};

/// Vectorial 2D evolution (no vertical dependence): integrates
/// w' = L_alpha w for a 3-component field and records component norms.
EvolutionTrace evolve_linear_2dvec(const ModeField& w0, Real alpha, const WeightSpec& m,
                                   Real T, Real dt, Real dt_out = 0.1,
                                   int snapshot_every = 0);

/// Stretched-mode 3D linear evolution with k(t) = k0 e^{-t}.
EvolutionTrace evolve_stretched(const ModeField& w0, Real k0, Real alpha,
                                const WeightSpec& m, Real T, Real dt,
                                Real dt_out = 0.1, int snapshot_every = 0);

/// Nonlinear 2D perturbation evolution for scalar vertical vorticity:
/// dw/dt = L_h w - alpha (advection + feedback) w - (K2D * w, grad_h) w with
/// the quadratic term evaluated pseudo-spectrally on the dealias nodes.
EvolutionTrace evolve_nonlinear_2d(const ModeField& omega3_0, Real alpha,
                                   const WeightSpec& m, Real T, Real dt,
                                   Real dt_out = 0.1, int snapshot_every = 0);

}  // namespace bspec
