#pragma once

#include "bspec/grid.hpp"

namespace bspec {

/// Velocity reconstructed from vorticity. Stored as physical (unflattened)
/// per-mode radial values in Cartesian components; derivative operators widen
/// the azimuthal range by one, so modes run to n_max + 1.
class VelocityField {
 public:
  VelocityField() = default;
  VelocityField(GridPtr grid, int components, bool horizontal_only);

  GridPtr grid;
  int components = 0;
  bool horizontal_only = true;
  int n_ext = 0;  // modes -n_ext..n_ext
  MatrixXc data;  // (components * (2 n_ext + 1)) x n_r

  int row_of(int c, int n) const { return c * (2 * n_ext + 1) + (n + n_ext); }
  MatrixXc::RowXpr u(int c, int n) { return data.row(row_of(c, n)); }
  MatrixXc::ConstRowXpr u(int c, int n) const { return data.row(row_of(c, n)); }

  /// Physical value of one component at a grid node and angle.
  Complex value_at_node(int c, int node, Real theta) const;
};

/// 2D Biot-Savart law: horizontal velocity induced by vertical vorticity,
/// computed per azimuthal mode through the radial stream function.
VelocityField velocity_2d(const ModeField& omega3);

/// Fixed-vertical-wavenumber Biot-Savart: for vorticity w(x_h) e^{i k x3},
/// solves the screened vector potential (Delta_h - k^2) A = -w per component
/// and mode and returns u = curl_k A. k = 0 falls back to the plain 2D law.
VelocityField velocity_mode3d(const ModeField& w, Real k);

/// Relative residual of curl_k(velocity_mode3d(w, k)) - w, using the radial
/// equation to supply second derivatives of the potential. Meaningful for
/// divergence-free w.
Real curl_consistency_residual(const ModeField& w, Real k);

/// curl with d3 -> ik of a 3-component envelope-flattened field; the result
/// is divergence-free (with the same k) by construction. Output modes beyond
/// n_max are truncated.
ModeField curl_k_field(const ModeField& a, Real k);

/// Discrete divergence d1 f1 + d2 f2 + i k f3 of a 3-component field,
/// returned as a scalar flattened field (modes beyond n_max truncated).
ModeField divergence_k_field(const ModeField& f, Real k);

/// Relative residual of div_k u for u = velocity_mode3d(w, k), where
/// div_k = d1 u1 + d2 u2 + i k u3.
Real divergence_residual(const ModeField& w, Real k);

namespace detail {

/// Radial stream-function kernels of the 2D law for one azimuthal family:
/// psi and psi' at the nodes (and at the dealias nodes) from modal
/// coefficients of the vorticity. For nu = 0 only psi' is defined.
struct LaplaceKernels {
  MatrixXr psi, dpsi;            // n_r x m
  MatrixXr psi_fine, dpsi_fine;  // n_fine x m
};

/// Screened-potential kernels for one family at wavenumber k > 0: vector
/// potential A and dA/dr at the nodes from modal source coefficients.
struct HelmholtzKernels {
  MatrixXr A, dA;  // n_r x m
  Real wronskian_drift = 0;
};

const LaplaceKernels& laplace_kernels(const GridPtr& grid, int nu);
const HelmholtzKernels& helmholtz_kernels(const GridPtr& grid, int nu, Real k);

/// Homogeneous radial solutions (regular at 0 / decaying at infinity) of
/// y'' + y'/r - (nu^2/r^2 + k^2) y = 0 sampled at the grid's integration
/// points; exposed for kernel validation against the Bessel product.
struct RadialHomogeneous {
  ArrayXr pts;           // sample radii (integration points plus nodes)
  ArrayXr y_reg, dy_reg;
  ArrayXr y_dec, dy_dec;
  Real green_scale = 0;  // C0 with G(r,s) = y_reg(r_<) y_dec(r_>) / C0
};
RadialHomogeneous homogeneous_solutions(const GridPtr& grid, int nu, Real k);

}  // namespace detail

}  // namespace bspec
