#pragma once

#include <memory>
#include <vector>

#include "bspec/fields.hpp"
#include "bspec/quadrature.hpp"
#include "bspec/types.hpp"

namespace bspec {

/// Polar spectral discretization of the plane with Gaussian envelope.
///
/// Radial nodes and weights form a Gauss rule for the measure r e^{-r^2/4} dr
/// on (0, r_max), so discrete inner products of envelope-flattened fields
/// reproduce the L^2(infinity) inner product exactly on the resolved class.
/// Azimuthal modes n = -n_max..n_max. For each |n| a degree-graded radial
/// basis  phi_l(r) = p_l(r^2) r^{|n|} e^{-r^2/8}  is kept with values and
/// exact derivatives at the nodes; p_l are orthonormal polynomials.
class SpectralGrid {
 public:
  /// Radial family for one azimuthal order |n|.
  struct Family {
    int nu = 0;       // |n|
    int m = 0;        // modal dimension
    OrthoPolyBasis poly;
    MatrixXr P, dP, d2P;   // p, dp/du, d2p/du2 at nodes (n_r x m)
    MatrixXr B;            // flattened basis values at nodes (n_r x m)
    MatrixXr dB;           // d/dr of flattened basis at nodes
    MatrixXr TB;           // flattened Fokker-Planck applied to basis, exact
    MatrixXr A;            // analysis operator B^T diag(w_rdr)  (m x n_r)
    MatrixXr B_fine;       // basis at dealias nodes (n_fine x m)
  };

  int n_r = 0;
  int n_max = 0;
  Real r_max = 0;

  ArrayXr r, u;       // radial nodes, u = r^2 (size n_r)
  ArrayXr w_rdr;      // weights: sum w_i f(r_i) ~ int f(r) r dr
  ArrayXr env;        // e^{-u/8} at nodes
  ArrayXr env_fine;   // e^{-u/8} at dealias nodes

  ArrayXr r_fine, u_fine, w_rdr_fine;  // 1.5x dealias rule, same measure family

  std::vector<Family> families;  // index |n| = 0..n_max

  int theta_count() const { return 2 * n_max + 1; }
  int modes() const { return 2 * n_max + 1; }
  int mode_index(int n) const { return n + n_max; }
  const Family& family(int n) const { return families[std::abs(n)]; }

  /// Weight factor e^{-u/4} rho_m(u) at the nodes; equals one for m = infinity.
  ArrayXr weight_factor(const WeightSpec& w) const;

  /// Quadrature-vs-analytic-moment defect reported by the construction self-test.
  Real moment_defect = 0;
};

using GridPtr = std::shared_ptr<const SpectralGrid>;

/// Build and validate a grid. Throws NumericalError when the quadrature
/// self-test fails, std::invalid_argument on bad sizes.
GridPtr build_grid(int n_r, int n_max, Real r_max);

/// Scalar or 3-component complex field stored as envelope-flattened radial
/// values per azimuthal mode: physical field = sum_n h(r,n) e^{-r^2/8} e^{i n theta}.
/// For 3 components the physical field is (f1, f2, f3) in Cartesian components.
class ModeField {
 public:
  ModeField() = default;
  ModeField(GridPtr grid, int components);

  GridPtr grid;
  int components = 0;
  MatrixXc data;  // (components * modes) x n_r

  int rows() const { return static_cast<int>(data.rows()); }
  int row_of(int c, int n) const { return c * grid->modes() + grid->mode_index(n); }
  MatrixXc::RowXpr h(int c, int n) { return data.row(row_of(c, n)); }
  MatrixXc::ConstRowXpr h(int c, int n) const { return data.row(row_of(c, n)); }

  ModeField& operator+=(const ModeField& o) { data += o.data; return *this; }
  ModeField& operator-=(const ModeField& o) { data -= o.data; return *this; }
  ModeField& operator*=(Complex s) { data *= s; return *this; }
};

/// Discrete || f ||_{L^2(m)}.
Real weighted_norm(const ModeField& f, const WeightSpec& w);
/// Same restricted to one component (0-based).
Real weighted_norm_component(const ModeField& f, int component, const WeightSpec& w);
/// Norm of the nodal restriction to r > r_cut in L^2(infinity).
Real tail_norm(const ModeField& f, Real r_cut);

/// L^2(infinity) inner product <f, g>.
Complex inner_product_inf(const ModeField& f, const ModeField& g);

/// Sampled derivative of the vortex profile: d^j/dx1^j d^k/dx2^k g, computed
/// from the closed polynomial form. Throws when the order exceeds what the
/// grid resolves exactly.
ModeField hermite_eigenfunction(GridPtr grid, int j, int k);

/// Physical values at arbitrary points (r, theta). Points with r > r_max throw.
VectorXc synthesize(const ModeField& f, const ArrayXr& r_pts, const ArrayXr& theta_pts);
/// Physical values on the tensor grid nodes x equispaced angles (n_r x n_theta).
MatrixXc synthesize_grid(const ModeField& f);
/// Exact inverse of synthesize_grid.
ModeField analyze_grid(const SpectralGrid& grid, GridPtr grid_ptr, const MatrixXc& values,
                       int components = 1);

/// Orthogonal projection onto the resolved modal class (degree-graded bases).
ModeField project_bandlimited(const ModeField& f);

/// Modal coordinates of one (component, mode) radial function.
VectorXc modal_coords(const ModeField& f, int c, int n);
/// Write modal coordinates back as nodal values.
void set_from_modal(ModeField& f, int c, int n, const VectorXc& coeffs);

}  // namespace bspec
