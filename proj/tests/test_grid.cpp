#include <cmath>
#include <random>

#include "bspec/grid.hpp"
#include "doctest.h"

using namespace bspec;

namespace {
GridPtr default_grid() {
  static GridPtr g = build_grid(64, 8, 20.0);
  return g;
}

ModeField sampled_gaussian(GridPtr g) {
  // g(x_h) flattened: h_0(r) = e^{-r^2/8} / (4 pi), all other modes zero.
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
      for (int l = 0; l < fam.m; ++l) {
        // Smooth spectrum: decay with degree keeps fields resolved.
        const Real s = std::exp(-0.15 * l);
        coeffs[l] = Complex(dist(rng), dist(rng)) * s;
      }
      set_from_modal(f, c, n, coeffs);
    }
  return f;
}
}  // namespace

TEST_CASE("build_grid quadrature reproduces analytic moments") {
  auto g = default_grid();
  // int_0^inf e^{-r^2/4} r dr = 2
  const Real q0 = (g->w_rdr * (-g->u / 4.0).exp()).sum();
  CHECK(std::abs(q0 - 2.0) < 1e-12);
  CHECK(g->moment_defect < 1e-12);
  // Envelope negligible at the boundary.
  CHECK(std::exp(-g->r_max * g->r_max / 8.0) < 1e-14);
}

TEST_CASE("build_grid minimal and invalid inputs") {
  CHECK_NOTHROW(build_grid(8, 0, 20.0));
  CHECK_THROWS_AS(build_grid(4, 0, 20.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(64, -1, 20.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(64, 8, 0.0), std::invalid_argument);
}

TEST_CASE("weighted norm of the vortex profile") {
  auto g = default_grid();
  ModeField f = sampled_gaussian(g);

  // ||g||_{L^2(inf)}^2 = int g^2 e^{r^2/4} dx = (1/(16 pi^2)) * 4 pi = 1/(4 pi);
  // the analytic oracle int_0^inf e^{-r^2/4} r dr = 2 fixes the value.
  const Real expected = std::sqrt(1.0 / (4.0 * kPi));
  CHECK(weighted_norm(f, WeightSpec::infinite()) ==
        doctest::Approx(expected).epsilon(1e-12));

  // Finite m is strictly smaller.
  CHECK(weighted_norm(f, WeightSpec::finite(4.0)) < expected);
  CHECK(weighted_norm(f, WeightSpec::finite(8.0)) <
        weighted_norm(f, WeightSpec::finite(16.0)));

  ModeField zero(g, 1);
  CHECK(weighted_norm(zero, WeightSpec::infinite()) == 0.0);
}

TEST_CASE("hermite eigenfunctions match closed forms") {
  auto g = default_grid();

  ModeField f00 = hermite_eigenfunction(g, 0, 0);
  ModeField gg = sampled_gaussian(g);
  CHECK((f00.data - gg.data).cwiseAbs().maxCoeff() < 1e-14);

  // (1,0): -(x1/2) g  -> modes +-1 with radial -(r/4) g.
  ModeField f10 = hermite_eigenfunction(g, 1, 0);
  ArrayXc expected = (-(g->r / 4.0) * g->env / (4.0 * kPi)).cast<Complex>();
  CHECK((f10.h(0, 1).transpose().array() - expected).abs().maxCoeff() < 1e-14);
  CHECK((f10.h(0, -1).transpose().array() - expected).abs().maxCoeff() < 1e-14);

  // (1,1): (x1 x2 / 4) g -> modes +-2, radial -+ r^2/(16 i)... check via synthesis.
  ModeField f11 = hermite_eigenfunction(g, 1, 1);
  ArrayXr rp(3), tp(3);
  rp << 0.7, 1.9, 3.3;
  tp << 0.3, 1.1, 2.9;
  VectorXc vals = synthesize(f11, rp, tp);
  for (int i = 0; i < 3; ++i) {
    const Real x1 = rp[i] * std::cos(tp[i]);
    const Real x2 = rp[i] * std::sin(tp[i]);
    const Real exact = (x1 * x2 / 4.0) * gaussian_profile(Vector2r(x1, x2));
    CHECK(std::abs(vals[i] - exact) < 1e-13);
  }

  CHECK_THROWS_AS(hermite_eigenfunction(g, 9, 0), NumericalError);
}

TEST_CASE("synthesize/analyze round trips") {
  auto g = default_grid();

  for (auto f : {sampled_gaussian(g), hermite_eigenfunction(g, 1, 0),
                 random_bandlimited(g, 1234)}) {
    MatrixXc values = synthesize_grid(f);
    ModeField back = analyze_grid(*g, g, values);
    const Real scale = f.data.cwiseAbs().maxCoeff();
    CHECK((back.data - f.data).cwiseAbs().maxCoeff() / scale < 1e-12);

    // Parseval consistency through the round trip.
    const Real n1 = weighted_norm(f, WeightSpec::finite(4.0));
    const Real n2 = weighted_norm(back, WeightSpec::finite(4.0));
    CHECK(std::abs(n1 - n2) / n1 < 1e-10);
  }

  ArrayXr bad_r(1), bad_t(1);
  bad_r << 21.0;
  bad_t << 0.0;
  CHECK_THROWS_AS(synthesize(sampled_gaussian(g), bad_r, bad_t), std::domain_error);
}

TEST_CASE("band-limited projection is idempotent and preserves resolved fields") {
  auto g = default_grid();
  ModeField f = random_bandlimited(g, 77);
  ModeField p = project_bandlimited(f);
  CHECK((p.data - f.data).cwiseAbs().maxCoeff() < 1e-11 * f.data.cwiseAbs().maxCoeff());
}

TEST_CASE("regularity: modal basis carries r^|n| vanishing at the origin") {
  auto g = default_grid();
  // Synthesized smooth fields: mode-n coefficient over r^{|n|} stays bounded
  // as r -> 0. The basis enforces this by construction; check the ratio of
  // the first two nodes stays O(1) for a random resolved field.
  ModeField f = random_bandlimited(g, 5);
  for (int n = -g->n_max; n <= g->n_max; ++n) {
    const Real h0 = std::abs(f.h(0, n)(0));
    const Real scale = std::pow(g->r[0], std::abs(n));
    if (h0 > 0) CHECK(h0 / scale < 1e6);  // bounded h / r^|n|
  }
}
