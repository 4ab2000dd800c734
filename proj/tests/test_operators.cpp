#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "bspec/fields.hpp"
#include "bspec/operators.hpp"
#include "doctest.h"

using namespace bspec;

namespace {
GridPtr default_grid() {
  static GridPtr g = build_grid(64, 8, 20.0);
  return g;
}

ModeField sampled_gaussian(GridPtr g) {
  ModeField f(g, 1);
  f.h(0, 0) = (g->env / (4.0 * kPi)).cast<Complex>().matrix().transpose();
  return f;
}

ModeField random_bandlimited(GridPtr g, unsigned seed, int components = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> dist;
  ModeField f(g, components);
  for (int c = 0; c < components; ++c)
    for (int n = -g->n_max; n <= g->n_max; ++n) {
      const auto& fam = g->family(n);
      VectorXc coeffs(fam.m);
      for (int l = 0; l < fam.m; ++l)
        coeffs[l] = Complex(dist(rng), dist(rng)) * std::exp(-0.3 * l);
      set_from_modal(f, c, n, coeffs);
    }
  return f;
}

// x_h^perp g: the universal eigenfunction of the horizontal operator.
ModeField xperp_g(GridPtr g) {
  ModeField f(g, 2);
  // circular: h+ = i r e^{-u/8}/(4 pi) at mode 1, h- = -(same) at mode -1
  const ArrayXc up = Complex(0, 1) * (g->r * g->env / (4.0 * kPi)).cast<Complex>();
  f.h(0, 1) = (0.5 * up).matrix().transpose();
  f.h(1, 1) = (Complex(0, -0.5) * up).matrix().transpose();
  f.h(0, -1) = (-0.5 * up).matrix().transpose();
  f.h(1, -1) = (Complex(0, -0.5) * up).matrix().transpose();
  return f;
}

Real rel_residual(const ModeField& got, const ModeField& want) {
  ModeField diff = got;
  diff.data -= want.data;
  return weighted_norm(diff, WeightSpec::infinite()) /
         weighted_norm(want, WeightSpec::infinite());
}

std::vector<Real> collect_real_eigs(const OperatorMatrix& op) {
  std::vector<Real> eigs;
  for (const auto& b : op.blocks) {
    Eigen::ComplexEigenSolver<MatrixXc> es(b.A, false);
    for (int i = 0; i < b.size; ++i) eigs.push_back(es.eigenvalues()[i].real());
  }
  std::sort(eigs.begin(), eigs.end(), std::greater<Real>());
  return eigs;
}
}  // namespace

TEST_CASE("Fokker-Planck ladder with multiplicities") {
  auto g = default_grid();
  OperatorMatrix lh = assemble_Lh(g);
  std::vector<Real> eigs = collect_real_eigs(lh);
  size_t at = 0;
  for (int j = 0; j <= 6; ++j)
    for (int c = 0; c < j + 1; ++c, ++at)
      CHECK(std::abs(eigs[at] - (-0.5 * j)) < 1e-8);
}

TEST_CASE("Fokker-Planck blocks are symmetric in the flattened basis") {
  auto g = default_grid();
  OperatorMatrix lh = assemble_Lh(g);
  for (const auto& b : lh.blocks) {
    CHECK((b.A - b.A.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(b.A.imag().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("Fokker-Planck annihilates the vortex profile") {
  auto g = default_grid();
  OperatorMatrix lh = assemble_Lh(g);
  ModeField gg = sampled_gaussian(g);
  CHECK(weighted_norm(lh.apply(gg), WeightSpec::infinite()) /
            weighted_norm(gg, WeightSpec::infinite()) <
        1e-8);
}

TEST_CASE("Fokker-Planck eigenfunction matvecs") {
  auto g = default_grid();
  OperatorMatrix lh = assemble_Lh(g);
  {
    ModeField f = hermite_eigenfunction(g, 1, 0);
    ModeField want = f;
    want.data *= Complex(-0.5, 0);
    CHECK(rel_residual(lh.apply(f), want) < 1e-8);
  }
  {
    ModeField f = hermite_eigenfunction(g, 1, 1);
    ModeField want = f;
    want.data *= Complex(-1.0, 0);
    CHECK(rel_residual(lh.apply(f), want) < 1e-8);
  }
}

TEST_CASE("advection kills radially symmetric fields and is skew-adjoint") {
  auto g = default_grid();
  OperatorMatrix adv = assemble_advection(g);

  ModeField radial(g, 1);
  std::mt19937_64 rng(3);
  std::normal_distribution<Real> dist;
  VectorXc coeffs(g->families[0].m);
  for (int l = 0; l < coeffs.size(); ++l) coeffs[l] = dist(rng) * std::exp(-0.2 * l);
  set_from_modal(radial, 0, 0, coeffs);
  CHECK(weighted_norm(adv.apply(radial), WeightSpec::infinite()) < 1e-14);

  for (unsigned seed = 0; seed < 20; ++seed) {
    ModeField f = random_bandlimited(g, 100 + seed);
    const Complex q = inner_product_inf(adv.apply(f), f);
    const Real n2 = std::pow(weighted_norm(f, WeightSpec::infinite()), 2);
    CHECK(std::abs(q.real()) < 1e-10 * n2);
  }
}

TEST_CASE("advection acts as i n u^g pointwise") {
  auto g = default_grid();
  OperatorMatrix adv = assemble_advection(g);
  ModeField f(g, 1);
  VectorXc coeffs = VectorXc::Zero(g->families[1].m);
  coeffs[0] = 1.0;
  coeffs[2] = 0.4;
  set_from_modal(f, 0, 1, coeffs);
  ModeField out = adv.apply(f);
  ArrayXc expected(g->n_r);
  for (int i = 0; i < g->n_r; ++i)
    expected[i] = Complex(0, 1) * ug_scalar(g->u[i]) * f.h(0, 1)(i);
  ModeField ref(g, 1);
  ref.h(0, 1) = expected.matrix().transpose();
  ref = project_bandlimited(ref);  // u^g h leaves the modal class slightly
  CHECK((out.h(0, 1) - ref.h(0, 1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("velocity-Jacobian multiplication matches the pointwise closed form") {
  auto g = default_grid();
  OperatorMatrix l2 = assemble_stretch_h(g);
  // Keep angular content two modes below the truncation so the product has
  // no aliased modes on the analysis grid.
  ModeField w(g, 2);
  {
    std::mt19937_64 rng(11);
    std::normal_distribution<Real> dist;
    for (int c = 0; c < 2; ++c)
      for (int n = -(g->n_max - 2); n <= g->n_max - 2; ++n) {
        const auto& fam = g->family(n);
        VectorXc coeffs(fam.m);
        for (int l = 0; l < fam.m; ++l)
          coeffs[l] = Complex(dist(rng), dist(rng)) * std::exp(-0.3 * l);
        set_from_modal(w, c, n, coeffs);
      }
  }
  ModeField out = l2.apply(w);

  auto jac = [](const Vector2r& x) {
    const Real u = x.squaredNorm();
    const Real ug = ug_scalar(u), dug = ug_scalar_derivative(u);
    Eigen::Matrix2d J;
    J(0, 0) = -2.0 * x.x() * x.y() * dug;
    J(0, 1) = -ug - 2.0 * x.y() * x.y() * dug;
    J(1, 0) = ug + 2.0 * x.x() * x.x() * dug;
    J(1, 1) = 2.0 * x.x() * x.y() * dug;
    return J;
  };

  // Pointwise product on the tensor grid, analyzed and projected; the
  // operator output is the discrete projection of the same product.
  ModeField ref(g, 2);
  const int nt = g->theta_count();
  for (int c = 0; c < 2; ++c) {
    MatrixXc vals(g->n_r, nt);
    for (int jt = 0; jt < nt; ++jt) {
      const Real theta = 2.0 * kPi * jt / nt;
      for (int i = 0; i < g->n_r; ++i) {
        Complex w1 = 0, w2 = 0;
        for (int n = -g->n_max; n <= g->n_max; ++n) {
          const Complex ph = std::polar(1.0, n * theta) * g->env[i];
          w1 += w.h(0, n)(i) * ph;
          w2 += w.h(1, n)(i) * ph;
        }
        const Real x1 = g->r[i] * std::cos(theta), x2 = g->r[i] * std::sin(theta);
        const Eigen::Matrix2d J = jac(Vector2r(x1, x2));
        vals(i, jt) = (c == 0) ? w1 * J(0, 0) + w2 * J(0, 1)
                               : w1 * J(1, 0) + w2 * J(1, 1);
      }
    }
    ModeField comp = analyze_grid(*g, g, vals);
    comp = project_bandlimited(comp);
    for (int n = -g->n_max; n <= g->n_max; ++n) ref.h(c, n) = comp.h(0, n);
  }
  const Real scale = ref.data.cwiseAbs().maxCoeff();
  CHECK((out.data - ref.data).cwiseAbs().maxCoeff() / scale < 1e-9);
}

TEST_CASE("velocity-Jacobian rows decay like 1/r^2") {
  auto g = default_grid();
  for (int i = 0; i < g->n_r; ++i) {
    if (g->r[i] < 15.0) continue;
    const Real a = gaussian_profile_r2(g->u[i]);
    const Real b = 2.0 * g->u[i] * ug_scalar_derivative(g->u[i]);
    CHECK(std::abs(a) + std::abs(b) < 0.5 / g->u[i]);
  }
}

TEST_CASE("vertical feedback vanishes on radial fields") {
  auto g = default_grid();
  OperatorMatrix l3 = assemble_feedback3(g);
  CHECK(weighted_norm(l3.apply(sampled_gaussian(g)), WeightSpec::infinite()) < 1e-14);

  ModeField radial(g, 1);
  VectorXc coeffs = VectorXc::Zero(g->families[0].m);
  coeffs[1] = 1.0;
  coeffs[3] = -0.7;
  set_from_modal(radial, 0, 0, coeffs);
  CHECK(weighted_norm(l3.apply(radial), WeightSpec::infinite()) < 1e-14);
}

TEST_CASE("vertical feedback matches the compositional oracle") {
  auto g = default_grid();
  OperatorMatrix l3 = assemble_feedback3(g);
  ModeField f(g, 1);
  VectorXc coeffs = VectorXc::Zero(g->families[1].m);
  coeffs[0] = 0.5;
  coeffs[1] = 0.25;
  set_from_modal(f, 0, 1, coeffs);
  for (int i = 0; i < g->n_r; ++i) f.h(0, -1)(i) = std::conj(f.h(0, 1)(i));

  ModeField out = l3.apply(f);
  VelocityField vel = velocity_2d(f);

  for (int p : {5, 20, 40}) {
    for (Real theta : {0.8, 4.0}) {
      const Real x1 = g->r[p] * std::cos(theta), x2 = g->r[p] * std::sin(theta);
      const Complex u1 = vel.value_at_node(0, p, theta);
      const Complex u2 = vel.value_at_node(1, p, theta);
      // (u, grad) g = -(1/2) g (u . x)
      const Real gg = gaussian_profile_r2(g->u[p]);
      const Complex expected = -0.5 * gg * (u1 * x1 + u2 * x2);
      Complex got = 0;
      for (int n = -g->n_max; n <= g->n_max; ++n)
        got += out.h(0, n)(p) * std::polar(1.0, n * theta) * g->env[p];
      CHECK(std::abs(got - expected) < 1e-8);
    }
  }
}

TEST_CASE("universal eigenvalue -2 of the horizontal operator") {
  auto g = default_grid();
  ModeField v = xperp_g(g);
  const Real vnorm = weighted_norm(v, WeightSpec::infinite());
  for (Real alpha : {0.0, 1.0, 10.0, 100.0}) {
    OperatorMatrix op = assemble_L_alpha_h(g, alpha);
    ModeField out = op.apply(v);
    out.data += 2.0 * v.data;
    CHECK(weighted_norm(out, WeightSpec::infinite()) / vnorm < 1e-7);
  }
}

TEST_CASE("horizontal operator at alpha = 0 is the shifted Fokker-Planck") {
  auto g = default_grid();
  OperatorMatrix op = assemble_L_alpha_h(g, 0.0);
  std::vector<Real> eigs = collect_real_eigs(op);
  CHECK(std::abs(eigs[0] + 1.5) < 1e-8);
}

TEST_CASE("vertical operator annihilates the profile for any alpha") {
  auto g = default_grid();
  ModeField gg = sampled_gaussian(g);
  for (Real alpha : {0.0, 1.0, 100.0}) {
    OperatorMatrix op = assemble_L_alpha_3(g, alpha);
    CHECK(weighted_norm(op.apply(gg), WeightSpec::infinite()) /
              weighted_norm(gg, WeightSpec::infinite()) <
          1e-8);
  }
}

TEST_CASE("vertical operator at alpha = 0 has the plain ladder") {
  auto g = default_grid();
  OperatorMatrix op = assemble_L_alpha_3(g, 0.0);
  std::vector<Real> eigs = collect_real_eigs(op);
  CHECK(std::abs(eigs[0] - 0.0) < 1e-9);
  CHECK(std::abs(eigs[1] + 0.5) < 1e-9);
  CHECK(std::abs(eigs[2] + 0.5) < 1e-9);
  CHECK(std::abs(eigs[3] + 1.0) < 1e-9);
}

TEST_CASE("coupling operator vanishes at k = 0 and is O(k) for small k") {
  auto g = default_grid();
  OperatorMatrix H = assemble_H(g, 0.0);
  for (const auto& b : H.blocks) CHECK(b.A.cwiseAbs().maxCoeff() == 0.0);
  OperatorMatrix Hs = assemble_H(g, 1e-3);
  Real max_norm = 0;
  for (const auto& b : Hs.blocks) max_norm = std::max(max_norm, b.A.norm());
  CHECK(max_norm < 5e-3);
}

TEST_CASE("coupling operator matches the compositional oracle") {
  auto g = default_grid();
  const Real k = 1.0;
  OperatorMatrix H = assemble_H(g, k);

  ModeField w(g, 3);
  ModeField gg = sampled_gaussian(g);
  for (int n = -g->n_max; n <= g->n_max; ++n) w.h(2, n) = gg.h(0, n);
  ModeField out = H.apply(w);

  VelocityField u3d = velocity_mode3d(w, k);
  VelocityField u2d = velocity_2d(gg);

  for (int p : {6, 25, 45}) {
    const Real theta = 1.2;
    const Real x1 = g->r[p] * std::cos(theta), x2 = g->r[p] * std::sin(theta);
    const Real gval = gaussian_profile_r2(g->u[p]);
    const Complex ik(0, k);
    const Complex u1 = u3d.value_at_node(0, p, theta);
    const Complex u2 = u3d.value_at_node(1, p, theta);
    const Complex uz = u3d.value_at_node(2, p, theta);
    const Complex v1 = u1 - u2d.value_at_node(0, p, theta);
    const Complex v2 = u2 - u2d.value_at_node(1, p, theta);
    const Complex e1 = -gval * ik * u1;
    const Complex e2 = -gval * ik * u2;
    const Complex e3 = -0.5 * gval * (v1 * x1 + v2 * x2) - gval * ik * uz;
    Complex g1 = 0, g2 = 0, g3 = 0;
    for (int n = -g->n_max; n <= g->n_max; ++n) {
      const Complex ph = std::polar(1.0, n * theta) * g->env[p];
      g1 += out.h(0, n)(p) * ph;
      g2 += out.h(1, n)(p) * ph;
      g3 += out.h(2, n)(p) * ph;
    }
    CHECK(std::abs(g1 - e1) < 1e-8);
    CHECK(std::abs(g2 - e2) < 1e-8);
    CHECK(std::abs(g3 - e3) < 1e-8);
  }
}

TEST_CASE("stretched generator reduces and path-decomposes") {
  auto g = default_grid();
  {
    const Real alpha = 2.5;
    OperatorMatrix G = assemble_stretched_generator(g, alpha, 0.0);
    OperatorMatrix Lh2 = assemble_L_alpha_h(g, alpha);
    OperatorMatrix L3 = assemble_L_alpha_3(g, alpha);
    for (const auto& b : G.blocks) {
      const auto* hb = Lh2.block(b.M);
      if (hb && hb->size > 0)
        CHECK((b.A.topLeftCorner(hb->size, hb->size) - hb->A).cwiseAbs().maxCoeff() <
              1e-14);
      const auto* zb = L3.block(b.M);
      if (zb && std::abs(b.M) <= g->n_max) {
        const int zoff = b.size - zb->size;
        CHECK((b.A.block(zoff, zoff, zb->size, zb->size) - zb->A).cwiseAbs().maxCoeff() <
              1e-14);
        if (zoff > 0) {
          CHECK(b.A.block(0, zoff, zoff, zb->size).cwiseAbs().maxCoeff() == 0.0);
          CHECK(b.A.block(zoff, 0, zb->size, zoff).cwiseAbs().maxCoeff() == 0.0);
        }
      }
    }
  }
  {
    const Real k = 1.7;
    OperatorMatrix G = assemble_stretched_generator(g, 0.0, k);
    OperatorMatrix lh = assemble_Lh(g);
    for (const auto& b : G.blocks)
      for (const auto& mem : b.members) {
        const auto* lb = lh.block(mem.n);
        MatrixXc want = lb->A;
        want += ((mem.comp == 2 ? 0.0 : -1.5) - k * k) * MatrixXc::Identity(mem.m, mem.m);
        CHECK((b.A.block(mem.offset, mem.offset, mem.m, mem.m) - want)
                  .cwiseAbs()
                  .maxCoeff() < 1e-14);
      }
  }
  {
    const Real alpha = 1.0, k = 1.0;
    OperatorMatrix G = assemble_stretched_generator(g, alpha, k);
    OperatorMatrix G0 = assemble_stretched_generator(g, alpha, 0.0);
    OperatorMatrix H = assemble_H(g, k);
    for (const auto& b : G.blocks) {
      const auto* b0 = G0.block(b.M);
      const auto* bh = H.block(b.M);
      MatrixXc want = b0->A - alpha * bh->A - k * k * MatrixXc::Identity(b.size, b.size);
      CHECK((b.A - want).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("generator preserves the divergence constraint") {
  auto g = default_grid();
  const Real k = 1.0, alpha = 2.0;
  std::mt19937_64 rng(17);
  std::normal_distribution<Real> dist;
  // Resolved test field: radial degrees whose oscillator turning point lies
  // inside the domain. Beyond that the truncated-domain realization differs
  // from the whole-plane operator by a boundary term and no identity holds
  // (those modes are flagged by the spectral classification instead).
  const int l_cap = 8;
  ModeField pot(g, 3);
  for (int c = 0; c < 3; ++c)
    for (int n = -(g->n_max - 2); n <= g->n_max - 2; ++n) {
      const auto& fam = g->family(n);
      VectorXc coeffs = VectorXc::Zero(fam.m);
      for (int l = 0; l < l_cap; ++l)
        coeffs[l] = Complex(dist(rng), dist(rng)) * std::exp(-0.3 * l);
      set_from_modal(pot, c, n, coeffs);
    }
  ModeField w = curl_k_field(pot, k);

  OperatorMatrix G = assemble_stretched_generator(g, alpha, k);
  ModeField image = G.apply(w);
  // With the wavenumber flow k' = -k, the image of a div_k-free field
  // satisfies div_k(G w) = i k w3: together they keep div_k w(t) = 0.
  ModeField div = divergence_k_field(image, k);
  for (int n = -g->n_max; n <= g->n_max; ++n)
    div.h(0, n) -= Complex(0, k) * w.h(2, n);
  const Real rel = weighted_norm(div, WeightSpec::infinite()) /
                   weighted_norm(image, WeightSpec::infinite());
  CHECK(rel < 1e-7);
}

TEST_CASE("conjugation symmetry: spectra of blocks M and -M are conjugate") {
  auto g = default_grid();
  OperatorMatrix G = assemble_stretched_generator(g, 10.0, 1.0);
  const auto* bp = G.block(2);
  const auto* bm = G.block(-2);
  Eigen::ComplexEigenSolver<MatrixXc> ep(bp->A, false), em(bm->A, false);
  std::vector<Complex> lp(ep.eigenvalues().data(), ep.eigenvalues().data() + bp->size);
  std::vector<Complex> lm(em.eigenvalues().data(), em.eigenvalues().data() + bm->size);
  auto key = [](const Complex& a, const Complex& b) {
    return (a.real() != b.real()) ? a.real() < b.real() : a.imag() < b.imag();
  };
  std::sort(lp.begin(), lp.end(), key);
  for (auto& z : lm) z = std::conj(z);
  std::sort(lm.begin(), lm.end(), key);
  Real max_err = 0;
  for (size_t i = 0; i < lp.size(); ++i)
    max_err = std::max(max_err, std::abs(lp[i] - lm[i]));
  CHECK(max_err < 1e-8);
}
