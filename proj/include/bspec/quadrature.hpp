#pragma once

#include <functional>
#include <vector>

#include "bspec/types.hpp"

namespace bspec {

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
  ArrayXr x;
  ArrayXr w;
};

GaussLegendre gauss_legendre(int npts);

/// Composite panel rule on [a, b] with prefix sums at panel boundaries, so
/// cumulative integrals up to any boundary are exact bookkeeping.
struct CompositeRule {
  ArrayXr boundaries;  // size P+1, increasing, boundaries[0]=a, boundaries[P]=b
  ArrayXr x;           // all points, panel-major, increasing within panels
  ArrayXr w;           // matching weights
  int pts_per_panel = 0;

  int panels() const { return static_cast<int>(boundaries.size()) - 1; }

  /// Integral of nodal values f over the whole interval.
  Real integrate(const ArrayXr& f) const { return (f * w).sum(); }
  Complex integrate(const ArrayXc& f) const { return (f * w.cast<Complex>()).sum(); }

  /// Prefix integrals at panel boundaries: out[j] = integral over [a, boundaries[j]].
  ArrayXr prefix(const ArrayXr& f) const;
  ArrayXc prefix(const ArrayXc& f) const;
};

/// Composite rule from explicit panel boundaries, Gauss-Legendre points per panel.
CompositeRule composite_rule(const ArrayXr& boundaries, int pts_per_panel);

/// Graded composite rule on [0, b]: boundaries b*(j/P)^grade; resolves
/// polynomial oscillation clustered at the left endpoint.
CompositeRule graded_rule(Real b, int panels, int pts_per_panel, Real grade = 3.0);

/// Three-term recurrence coefficients of polynomials orthonormal with
/// respect to a positive measure given by nodal weights on a reference rule:
///   p_{-1} = 0,  p_0 = 1/sqrt(mu0),
///   b_{j+1} p_{j+1}(u) = (u - a_j) p_j(u) - b_j p_{j-1}(u).
struct OrthoPolyBasis {
  ArrayXr a;    // size m
  ArrayXr b;    // size m, b[0] unused (defined as 0)
  Real mu0 = 0; // total mass of the measure

  int degree_count() const { return static_cast<int>(a.size()); }

  /// Values p_0..p_{m-1} at given points: (npts x m).
  MatrixXr evaluate(const ArrayXr& u) const;
  /// Values plus first and second derivatives, each (npts x m).
  void evaluate_with_derivatives(const ArrayXr& u, MatrixXr& p, MatrixXr& dp,
                                 MatrixXr& d2p) const;
};

/// Stieltjes procedure with full reorthogonalization over a reference rule.
/// `measure` holds nonnegative nodal values of the weight function times the
/// reference quadrature weights (i.e. a discrete measure).
OrthoPolyBasis orthonormal_basis(const ArrayXr& u, const ArrayXr& measure, int m);

/// Gauss rule with `npts` points for the measure underlying `basis`
/// (Golub-Welsch on the Jacobi matrix).
void gauss_from_basis(const OrthoPolyBasis& basis, int npts, ArrayXr& nodes,
                      ArrayXr& weights);

}  // namespace bspec
