#include "bspec/quadrature.hpp"

#include <cmath>

namespace bspec {

GaussLegendre gauss_legendre(int npts) {
  // Newton iteration on Legendre polynomials, nodes seeded by the Chebyshev
  // asymptotic. Symmetric rule, accurate to roundoff for moderate npts.
  GaussLegendre rule;
  rule.x.resize(npts);
  rule.w.resize(npts);
  const int half = (npts + 1) / 2;
  for (int i = 0; i < half; ++i) {
    Real x = std::cos(kPi * (i + 0.75) / (npts + 0.5));
    Real dp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      // Legendre recurrence for P_n(x) and P'_n(x).
      Real p0 = 1.0, p1 = x;
      for (int j = 2; j <= npts; ++j) {
        Real p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = npts * (x * p1 - p0) / (x * x - 1.0);
      Real dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.x[i] = -x;
    rule.x[npts - 1 - i] = x;
    Real w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.w[i] = w;
    rule.w[npts - 1 - i] = w;
  }
  return rule;
}

ArrayXr CompositeRule::prefix(const ArrayXr& f) const {
  const int P = panels();
  ArrayXr out(P + 1);
  out[0] = 0;
  for (int p = 0; p < P; ++p) {
    Real s = 0;
    for (int q = 0; q < pts_per_panel; ++q) {
      const int idx = p * pts_per_panel + q;
      s += f[idx] * w[idx];
    }
    out[p + 1] = out[p] + s;
  }
  return out;
}

ArrayXc CompositeRule::prefix(const ArrayXc& f) const {
  const int P = panels();
  ArrayXc out(P + 1);
  out[0] = 0;
  for (int p = 0; p < P; ++p) {
    Complex s = 0;
    for (int q = 0; q < pts_per_panel; ++q) {
      const int idx = p * pts_per_panel + q;
      s += f[idx] * w[idx];
    }
    out[p + 1] = out[p] + s;
  }
  return out;
}

CompositeRule composite_rule(const ArrayXr& boundaries, int pts_per_panel) {
  const int P = static_cast<int>(boundaries.size()) - 1;
  GaussLegendre ref = gauss_legendre(pts_per_panel);
  CompositeRule rule;
  rule.boundaries = boundaries;
  rule.pts_per_panel = pts_per_panel;
  rule.x.resize(P * pts_per_panel);
  rule.w.resize(P * pts_per_panel);
  for (int p = 0; p < P; ++p) {
    const Real lo = boundaries[p], hi = boundaries[p + 1];
    const Real mid = 0.5 * (lo + hi), hw = 0.5 * (hi - lo);
    for (int q = 0; q < pts_per_panel; ++q) {
      rule.x[p * pts_per_panel + q] = mid + hw * ref.x[q];
      rule.w[p * pts_per_panel + q] = hw * ref.w[q];
    }
  }
  return rule;
}

CompositeRule graded_rule(Real b, int panels, int pts_per_panel, Real grade) {
  ArrayXr bounds(panels + 1);
  for (int j = 0; j <= panels; ++j)
    bounds[j] = b * std::pow(static_cast<Real>(j) / panels, grade);
  return composite_rule(bounds, pts_per_panel);
}

OrthoPolyBasis orthonormal_basis(const ArrayXr& u, const ArrayXr& measure, int m) {
  const auto n = u.size();
  OrthoPolyBasis basis;
  basis.a.resize(m);
  basis.b.resize(m);
  basis.mu0 = measure.sum();
  if (basis.mu0 <= 0) throw NumericalError("orthonormal_basis: measure has no mass");

  // Columns of P are the orthonormal polynomials evaluated on the reference
  // points; full reorthogonalization keeps the family stable to high degree.
  MatrixXr P(n, m);
  ArrayXr cur = ArrayXr::Constant(n, 1.0 / std::sqrt(basis.mu0));
  ArrayXr prev = ArrayXr::Zero(n);
  basis.b[0] = 0;
  for (int j = 0; j < m; ++j) {
    P.col(j) = cur.matrix();
    const Real aj = (u * cur * cur * measure).sum();
    basis.a[j] = aj;
    if (j + 1 == m) break;
    ArrayXr next = (u - aj) * cur - (j > 0 ? basis.b[j] : 0.0) * prev;
    // Reorthogonalize against everything built so far (twice is enough).
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= j; ++i) {
        const Real c = (next * P.col(i).array() * measure).sum();
        next -= c * P.col(i).array();
      }
    }
    const Real bj = std::sqrt((next * next * measure).sum());
    if (!(bj > 0) || !std::isfinite(bj))
      throw NumericalError("orthonormal_basis: breakdown at degree " +
                           std::to_string(j + 1));
    basis.b[j + 1] = bj;
    prev = cur;
    cur = next / bj;
  }
  return basis;
}

MatrixXr OrthoPolyBasis::evaluate(const ArrayXr& u) const {
  const int m = degree_count();
  MatrixXr P(u.size(), m);
  ArrayXr prev = ArrayXr::Zero(u.size());
  ArrayXr cur = ArrayXr::Constant(u.size(), 1.0 / std::sqrt(mu0));
  for (int j = 0; j < m; ++j) {
    P.col(j) = cur.matrix();
    if (j + 1 == m) break;
    ArrayXr next = ((u - a[j]) * cur - (j > 0 ? b[j] : 0.0) * prev) / b[j + 1];
    prev = cur;
    cur = next;
  }
  return P;
}

void OrthoPolyBasis::evaluate_with_derivatives(const ArrayXr& u, MatrixXr& P,
                                               MatrixXr& dP, MatrixXr& d2P) const {
  const int m = degree_count();
  const auto n = u.size();
  P.resize(n, m);
  dP.resize(n, m);
  d2P.resize(n, m);
  ArrayXr p_prev = ArrayXr::Zero(n), dp_prev = ArrayXr::Zero(n), d2p_prev = ArrayXr::Zero(n);
  ArrayXr p_cur = ArrayXr::Constant(n, 1.0 / std::sqrt(mu0));
  ArrayXr dp_cur = ArrayXr::Zero(n), d2p_cur = ArrayXr::Zero(n);
  for (int j = 0; j < m; ++j) {
    P.col(j) = p_cur.matrix();
    dP.col(j) = dp_cur.matrix();
    d2P.col(j) = d2p_cur.matrix();
    if (j + 1 == m) break;
    const Real bj = (j > 0 ? b[j] : 0.0);
    ArrayXr p_next = ((u - a[j]) * p_cur - bj * p_prev) / b[j + 1];
    ArrayXr dp_next = ((u - a[j]) * dp_cur + p_cur - bj * dp_prev) / b[j + 1];
    ArrayXr d2p_next = ((u - a[j]) * d2p_cur + 2.0 * dp_cur - bj * d2p_prev) / b[j + 1];
    p_prev = p_cur;
    dp_prev = dp_cur;
    d2p_prev = d2p_cur;
    p_cur = p_next;
    dp_cur = dp_next;
    d2p_cur = d2p_next;
  }
}

void gauss_from_basis(const OrthoPolyBasis& basis, int npts, ArrayXr& nodes,
                      ArrayXr& weights) {
  if (npts > basis.degree_count())
    throw NumericalError("gauss_from_basis: basis too short for requested rule");
  MatrixXr J = MatrixXr::Zero(npts, npts);
  for (int i = 0; i < npts; ++i) {
    J(i, i) = basis.a[i];
    if (i + 1 < npts) {
      J(i, i + 1) = basis.b[i + 1];
      J(i + 1, i) = basis.b[i + 1];
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXr> es(J);
  if (es.info() != Eigen::Success)
    throw NumericalError("gauss_from_basis: Jacobi matrix eigensolve failed");
  nodes = es.eigenvalues().array();
  // Christoffel numbers 1 / sum_j p_j(x_i)^2. Unlike the squared first
  // eigenvector component, these stay relatively accurate for weights far
  // below machine epsilon (tail nodes of decaying measures).
  OrthoPolyBasis head = basis;
  head.a.conservativeResize(npts);
  head.b.conservativeResize(npts);
  MatrixXr P = head.evaluate(nodes);
  weights.resize(npts);
  for (int i = 0; i < npts; ++i) weights[i] = 1.0 / P.row(i).squaredNorm();
}

}  // namespace bspec
