#include "bspec/grid.hpp"

#include <cmath>

namespace bspec {

namespace {

// Reference composite rule in u = r^2 on [0, u_max], graded toward 0 where
// high-degree orthogonal polynomials oscillate fastest.
CompositeRule reference_rule(Real u_max, int n_r) {
  const int panels = std::max(256, 2 * n_r);
  return graded_rule(u_max, panels, 12, 3.0);
}

ArrayXr family_measure(const CompositeRule& ref, int nu) {
  ArrayXr meas(ref.x.size());
  for (Eigen::Index i = 0; i < ref.x.size(); ++i)
    meas[i] = ref.w[i] * 0.5 * std::pow(ref.x[i], nu) * std::exp(-ref.x[i] / 4.0);
  return meas;
}

}  // namespace

ArrayXr SpectralGrid::weight_factor(const WeightSpec& w) const {
  if (w.is_infinite()) return ArrayXr::Ones(n_r);
  ArrayXr f(n_r);
  for (int i = 0; i < n_r; ++i)
    f[i] = std::exp(w.m * std::log1p(u[i] / (4.0 * w.m)) - u[i] / 4.0);
  return f;
}

GridPtr build_grid(int n_r, int n_max, Real r_max) {
  if (n_r < 8) throw std::invalid_argument("build_grid: n_r must be at least 8");
  if (n_max < 0) throw std::invalid_argument("build_grid: n_max must be nonnegative");
  if (!(r_max > 0)) throw std::invalid_argument("build_grid: r_max must be positive");

  auto grid = std::make_shared<SpectralGrid>();
  grid->n_r = n_r;
  grid->n_max = n_max;
  grid->r_max = r_max;

  const Real u_max = r_max * r_max;
  CompositeRule ref = reference_rule(u_max, n_r);

  // Nodes and weights from the |n| = 0 family; one extra degree so the fine
  // dealias rule can be drawn from the same recurrence.
  const int n_fine = (3 * n_r + 1) / 2;
  OrthoPolyBasis base0 = orthonormal_basis(ref.x, family_measure(ref, 0), n_fine + 1);

  ArrayXr u_nodes, w_meas;
  gauss_from_basis(base0, n_r, u_nodes, w_meas);
  grid->u = u_nodes;
  grid->r = u_nodes.sqrt();
  grid->w_rdr = w_meas * (u_nodes / 4.0).exp();
  grid->env = (-u_nodes / 8.0).exp();

  ArrayXr uf, wf;
  gauss_from_basis(base0, n_fine, uf, wf);
  grid->u_fine = uf;
  grid->r_fine = uf.sqrt();
  grid->w_rdr_fine = wf * (uf / 4.0).exp();
  grid->env_fine = (-uf / 8.0).exp();

  // Quadrature self-test against analytic moments of r e^{-r^2/4} dr:
  //   int_0^inf u^k r e^{-r^2/4} dr = 2 * 4^k * k!   (design degree 30).
  Real defect = 0;
  Real moment = 2.0;
  ArrayXr upow = ArrayXr::Ones(n_r);
  const ArrayXr gauss_w = grid->w_rdr * (-grid->u / 4.0).exp();
  const int design_degree = std::min(30, 2 * n_r - 2);
  for (int k = 0; k <= design_degree; ++k) {
    if (k > 0) {
      moment *= 4.0 * k;
      upow *= grid->u;
    }
    const Real q = (gauss_w * upow).sum();
    defect = std::max(defect, std::abs(q - moment) / moment);
  }
  grid->moment_defect = defect;
  if (defect > 1e-12)
    throw NumericalError("build_grid: quadrature moment defect " + std::to_string(defect));
  if (std::exp(-r_max * r_max / 8.0) >= 1e-14)
    throw NumericalError("build_grid: r_max too small, envelope not negligible at boundary");

  grid->families.resize(n_max + 1);
  for (int nu = 0; nu <= n_max; ++nu) {
    auto& fam = grid->families[nu];
    fam.nu = nu;
    fam.m = n_r - (nu + 1) / 2;
    OrthoPolyBasis poly =
        (nu == 0) ? base0 : orthonormal_basis(ref.x, family_measure(ref, nu), fam.m);
    if (nu == 0) {
      poly.a.conservativeResize(fam.m);
      poly.b.conservativeResize(fam.m);
    }
    fam.poly = poly;
    poly.evaluate_with_derivatives(grid->u, fam.P, fam.dP, fam.d2P);

    const ArrayXr rnu = grid->r.pow(nu);
    fam.B.resize(n_r, fam.m);
    fam.dB.resize(n_r, fam.m);
    fam.TB.resize(n_r, fam.m);
    for (int l = 0; l < fam.m; ++l) {
      const ArrayXr p = fam.P.col(l).array();
      const ArrayXr dp = fam.dP.col(l).array();
      const ArrayXr d2p = fam.d2P.col(l).array();
      fam.B.col(l) = (rnu * grid->env * p).matrix();
      // d/dr [ r^nu p(u) e^{-u/8} ] = r^{nu-1} e^{-u/8} (nu p + 2u p' - u p / 4)
      fam.dB.col(l) =
          (grid->r.pow(nu - 1) * grid->env * (nu * p + 2.0 * grid->u * dp - grid->u * p / 4.0))
              .matrix();
      // Flattened Fokker-Planck: r^nu e^{-u/8} (4u p'' + (4(nu+1) - u) p' - nu p / 2)
      fam.TB.col(l) = (rnu * grid->env *
                       (4.0 * grid->u * d2p + (4.0 * (nu + 1) - grid->u) * dp - 0.5 * nu * p))
                          .matrix();
    }
    fam.A = fam.B.transpose() * grid->w_rdr.matrix().asDiagonal();

    MatrixXr Pf = fam.poly.evaluate(grid->u_fine);
    fam.B_fine.resize(grid->u_fine.size(), fam.m);
    const ArrayXr rnu_f = grid->r_fine.pow(nu);
    for (int l = 0; l < fam.m; ++l)
      fam.B_fine.col(l) = (rnu_f * grid->env_fine * Pf.col(l).array()).matrix();

    const Real ortho_defect = (fam.A * fam.B - MatrixXr::Identity(fam.m, fam.m))
                                  .cwiseAbs()
                                  .maxCoeff();
    if (ortho_defect > 1e-10)
      throw NumericalError("build_grid: basis orthonormality defect " +
                           std::to_string(ortho_defect) + " at |n| = " + std::to_string(nu));
  }
  return grid;
}

ModeField::ModeField(GridPtr grid_in, int components_in)
    : grid(std::move(grid_in)), components(components_in) {
  data = MatrixXc::Zero(components * grid->modes(), grid->n_r);
}

Real weighted_norm(const ModeField& f, const WeightSpec& w) {
  const ArrayXr factor = f.grid->weight_factor(w) * f.grid->w_rdr;
  Real s = 0;
  for (int row = 0; row < f.rows(); ++row)
    s += (f.data.row(row).array().abs2() * factor.transpose()).sum();
  return std::sqrt(2.0 * kPi * s);
}

Real weighted_norm_component(const ModeField& f, int component, const WeightSpec& w) {
  const ArrayXr factor = f.grid->weight_factor(w) * f.grid->w_rdr;
  Real s = 0;
  for (int n = -f.grid->n_max; n <= f.grid->n_max; ++n)
    s += (f.h(component, n).array().abs2() * factor.transpose()).sum();
  return std::sqrt(2.0 * kPi * s);
}

Real tail_norm(const ModeField& f, Real r_cut) {
  Real s = 0;
  for (int row = 0; row < f.rows(); ++row)
    for (int i = 0; i < f.grid->n_r; ++i)
      if (f.grid->r[i] > r_cut) s += std::norm(f.data(row, i)) * f.grid->w_rdr[i];
  return std::sqrt(2.0 * kPi * s);
}

Complex inner_product_inf(const ModeField& f, const ModeField& g) {
  Complex s = 0;
  for (int row = 0; row < f.rows(); ++row)
    s += (g.data.row(row).array().conjugate() * f.data.row(row).array() *
          f.grid->w_rdr.transpose().cast<Complex>())
             .sum();
  return 2.0 * kPi * s;
}

ModeField hermite_eigenfunction(GridPtr grid_ptr, int j, int k) {
  const SpectralGrid& grid = *grid_ptr;
  if (j < 0 || k < 0) throw std::invalid_argument("hermite_eigenfunction: negative order");
  if (j + k > grid.n_max)
    throw NumericalError("hermite_eigenfunction: order exceeds azimuthal truncation");

  // 1D polynomials P_m with d^m/dx^m e^{-x^2/4} = P_m(x) e^{-x^2/4},
  // P_{m+1} = P_m' - (x/2) P_m.
  auto poly_1d = [](int order) {
    std::vector<std::vector<Real>> P(order + 1);
    P[0] = {1.0};
    for (int m = 0; m < order; ++m) {
      std::vector<Real> next(P[m].size() + 1, 0.0);
      for (size_t a = 1; a < P[m].size(); ++a) next[a - 1] += a * P[m][a];
      for (size_t a = 0; a < P[m].size(); ++a) next[a + 1] -= 0.5 * P[m][a];
      P[m + 1] = std::move(next);
    }
    return P;
  };
  const auto Pj = poly_1d(j)[j];
  const auto Pk = poly_1d(k)[k];

  // Expand P_j(x1) P_k(x2) in z^a zbar^b with x1 = (z+zbar)/2, x2 = (z-zbar)/(2i).
  const int deg = j + k;
  MatrixXc d = MatrixXc::Zero(deg + 1, deg + 1);  // d(a, b)
  // Binomial table.
  std::vector<std::vector<Real>> binom(deg + 1, std::vector<Real>(deg + 1, 0.0));
  for (int a = 0; a <= deg; ++a) {
    binom[a][0] = 1.0;
    for (int b = 1; b <= a; ++b)
      binom[a][b] = binom[a - 1][b - 1] + (b <= a - 1 ? binom[a - 1][b] : 0.0);
  }
  for (size_t p = 0; p < Pj.size(); ++p) {
    if (Pj[p] == 0.0) continue;
    for (size_t q = 0; q < Pk.size(); ++q) {
      if (Pk[q] == 0.0) continue;
      // x1^p = 2^{-p} sum_s C(p,s) z^s zbar^{p-s}
      // x2^q = (2i)^{-q} sum_t C(q,t) z^t (-zbar)^{q-t}
      const Complex c0 = Pj[p] * Pk[q] * std::pow(Complex(0.5, 0.0), (int)p) *
                         std::pow(Complex(0.0, -0.5), (int)q);
      for (size_t s = 0; s <= p; ++s)
        for (size_t t = 0; t <= q; ++t) {
          const Real sign = ((q - t) % 2 == 0) ? 1.0 : -1.0;
          d(s + t, (p - s) + (q - t)) += c0 * binom[p][s] * binom[q][t] * sign;
        }
    }
  }

  ModeField out(grid_ptr, 1);
  for (int a = 0; a <= deg; ++a)
    for (int b = 0; b <= deg - a; ++b) {
      if (d(a, b) == Complex(0, 0)) continue;
      const int n = a - b;
      if (std::abs(n) > grid.n_max) continue;
      const ArrayXr radial = grid.r.pow(a + b) * grid.env / (4.0 * kPi);
      out.h(0, n) += (d(a, b) * radial.cast<Complex>()).matrix().transpose();
    }
  return out;
}

VectorXc synthesize(const ModeField& f, const ArrayXr& r_pts, const ArrayXr& theta_pts) {
  if (f.components != 1)
    throw std::invalid_argument("synthesize: scalar fields only");
  const auto& g = *f.grid;
  for (Eigen::Index i = 0; i < r_pts.size(); ++i)
    if (r_pts[i] > g.r_max)
      throw std::domain_error("synthesize: point outside r_max");
  ArrayXr u_pts = r_pts.square();
  VectorXc out = VectorXc::Zero(r_pts.size());
  const ArrayXr env_pts = (-u_pts / 8.0).exp();
  for (int n = -g.n_max; n <= g.n_max; ++n) {
    const auto& fam = g.family(n);
    const VectorXc coeffs = fam.A.cast<Complex>() * f.h(0, n).transpose();
    MatrixXr Ppts = fam.poly.evaluate(u_pts);
    // Flattened h interpolant times the envelope gives the physical value.
    ArrayXc radial = (Ppts.cast<Complex>() * coeffs).array();
    radial *= (r_pts.pow(std::abs(n)) * env_pts * env_pts).cast<Complex>();
    for (Eigen::Index i = 0; i < r_pts.size(); ++i)
      out[i] += radial[i] * std::polar(1.0, n * theta_pts[i]);
  }
  return out;
}

MatrixXc synthesize_grid(const ModeField& f) {
  const auto& g = *f.grid;
  const int nt = g.theta_count();
  MatrixXc out = MatrixXc::Zero(g.n_r, nt);
  for (int jt = 0; jt < nt; ++jt) {
    const Real theta = 2.0 * kPi * jt / nt;
    for (int n = -g.n_max; n <= g.n_max; ++n) {
      const Complex phase = std::polar(1.0, n * theta);
      out.col(jt) +=
          phase * (f.h(0, n).transpose().array() * g.env.cast<Complex>()).matrix();
    }
  }
  return out;
}

ModeField analyze_grid(const SpectralGrid& grid, GridPtr grid_ptr, const MatrixXc& values,
                       int components) {
  if (components != 1)
    throw std::invalid_argument("analyze_grid: scalar fields only");
  const int nt = grid.theta_count();
  if (values.rows() != grid.n_r || values.cols() != nt)
    throw std::invalid_argument("analyze_grid: values must be n_r x n_theta");
  ModeField f(grid_ptr, 1);
  for (int n = -grid.n_max; n <= grid.n_max; ++n) {
    VectorXc mode = VectorXc::Zero(grid.n_r);
    for (int jt = 0; jt < nt; ++jt) {
      const Complex phase = std::polar(1.0, -n * (2.0 * kPi * jt / nt));
      mode += phase * values.col(jt);
    }
    mode /= static_cast<Real>(nt);
    f.h(0, n) = (mode.array() / grid.env.cast<Complex>()).matrix().transpose();
  }
  return f;
}

ModeField project_bandlimited(const ModeField& f) {
  ModeField out(f.grid, f.components);
  for (int c = 0; c < f.components; ++c)
    for (int n = -f.grid->n_max; n <= f.grid->n_max; ++n) {
      const auto& fam = f.grid->family(n);
      out.h(c, n) =
          (fam.B.cast<Complex>() * (fam.A.cast<Complex>() * f.h(c, n).transpose())).transpose();
    }
  return out;
}

VectorXc modal_coords(const ModeField& f, int c, int n) {
  const auto& fam = f.grid->family(n);
  return fam.A.cast<Complex>() * f.h(c, n).transpose();
}

void set_from_modal(ModeField& f, int c, int n, const VectorXc& coeffs) {
  const auto& fam = f.grid->family(n);
  f.h(c, n) = (fam.B.cast<Complex>() * coeffs).transpose();
}

}  // namespace bspec
