#include "bspec/propagate.hpp"

#include <cmath>

#include "bspec/fields.hpp"

namespace bspec {

namespace {

// Scaled modified Bessel function I_n(z) e^{-z}, evaluated by the periodic
// trapezoid rule on (1/pi) int_0^pi e^{-z(1-cos phi)} cos(n phi) dphi;
// spectrally accurate and overflow-free for the kernel's argument range.
Real scaled_bessel_i(int n, Real z) {
  const int quad_pts = 256;
  Real s = 0;
  for (int j = 0; j <= quad_pts; ++j) {
    const Real phi = kPi * j / quad_pts;
    const Real w = (j == 0 || j == quad_pts) ? 0.5 : 1.0;
    s += w * std::exp(-z * (1.0 - std::cos(phi))) * std::cos(n * phi);
  }
  return s / quad_pts;
}

Real member_shift(int comp) { return comp == 2 ? 0.0 : -1.5; }

}  // namespace

Real circulation(const ModeField& omega3) {
  const auto& g = *omega3.grid;
  const Complex c =
      (omega3.h(0, 0).transpose().array() * (g.w_rdr * g.env).cast<Complex>()).sum();
  return 2.0 * kPi * c.real();
}

RateFit decay_rate_fit(const ArrayXr& times, const ArrayXr& norms, Real t_a, Real t_b) {
  std::vector<Real> ts, ys;
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    if (times[i] < t_a - 1e-12 || times[i] > t_b + 1e-12) continue;
    if (!(norms[i] > 1e-300)) throw std::invalid_argument("decay_rate_fit: vanishing norm");
    ts.push_back(times[i]);
    ys.push_back(std::log(norms[i]));
  }
  const int n = static_cast<int>(ts.size());
  if (n < 10) throw std::invalid_argument("decay_rate_fit: need at least 10 samples");
  Real tbar = 0, ybar = 0;
  for (int i = 0; i < n; ++i) {
    tbar += ts[i];
    ybar += ys[i];
  }
  tbar /= n;
  ybar /= n;
  Real sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (ts[i] - tbar) * (ts[i] - tbar);
    sxy += (ts[i] - tbar) * (ys[i] - ybar);
  }
  const Real slope = sxy / sxx;
  Real sse = 0;
  for (int i = 0; i < n; ++i) {
    const Real e = ys[i] - ybar - slope * (ts[i] - tbar);
    sse += e * e;
  }
  RateFit fit;
  fit.rate = slope;
  fit.halfwidth = 2.0 * std::sqrt(sse / std::max(1, n - 2) / sxx);
  return fit;
}

RateFit decay_rate_fit(const EvolutionTrace& trace, Real t_a, Real t_b, bool vertical) {
  return decay_rate_fit(trace.times, vertical ? trace.norm_3 : trace.norm_h, t_a, t_b);
}

ModeField kernel_step_h(const ModeField& f, Real t) {
  if (!(t > 0)) throw std::domain_error("kernel_step_h: t must be positive");
  if (f.components != 1)
    throw std::invalid_argument("kernel_step_h: scalar fields only");
  const auto& g = *f.grid;
  const Real a = a_of_t(t);
  const Real emt = std::exp(-t), emt2 = std::exp(-t / 2.0);

  ModeField out(f.grid, 1);
  // Flattened kernel per mode:
  //   M_ij = (w_j / 2a) exp[u_i/8 - u_j/8 - (u_i + u_j e^{-t})/(4a) + z_ij]
  //          Ihat_n(z_ij),  z_ij = r_i r_j e^{-t/2} / (2a).
  for (int n = -g.n_max; n <= g.n_max; ++n) {
    MatrixXc M(g.n_r, g.n_r);
    for (int i = 0; i < g.n_r; ++i)
      for (int j = 0; j < g.n_r; ++j) {
        const Real z = g.r[i] * g.r[j] * emt2 / (2.0 * a);
        const Real expo =
            g.u[i] / 8.0 - g.u[j] / 8.0 - (g.u[i] + g.u[j] * emt) / (4.0 * a) + z;
        M(i, j) = g.w_rdr[j] / (2.0 * a) * std::exp(expo) * scaled_bessel_i(n, z);
      }
    out.h(0, n) = (M * f.h(0, n).transpose()).transpose();
  }
  return out;
}

VectorXc kernel_step_3(const ArrayXr& pts, const VectorXc& values, Real t,
                       const ArrayXr& out_pts) {
  if (!(t > 0)) throw std::domain_error("kernel_step_3: t must be positive");
  if (pts.size() < 2 || pts.size() != values.size())
    throw std::invalid_argument("kernel_step_3: bad sample data");
  const Real a2 = a_of_t(2.0 * t);
  const Real emt = std::exp(-t);
  const Real h = pts[1] - pts[0];
  const Real norm = 1.0 / std::sqrt(2.0 * kPi * a2);
  VectorXc out(out_pts.size());
  for (Eigen::Index i = 0; i < out_pts.size(); ++i) {
    Complex s = 0;
    const Real c = out_pts[i] * emt;
    for (Eigen::Index j = 0; j < pts.size(); ++j) {
      const Real d = c - pts[j];
      s += std::exp(-d * d / (2.0 * a2)) * values[j];
    }
    out[i] = norm * h * s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// StretchedPropagator
// ---------------------------------------------------------------------------

Real StretchedPropagator::suggested_dt(Real alpha) {
  // RK4 stability of the skew advection part, with margin.
  return std::min(0.05, 1.5 / (0.35 * std::abs(alpha) + 1.0));
}

StretchedPropagator::StretchedPropagator(GridPtr grid, Real alpha, Real k0, Real dt)
    : grid_(std::move(grid)), alpha_(alpha), k0_(k0), dt_(dt) {
  if (!(dt > 0)) throw std::invalid_argument("StretchedPropagator: dt must be positive");
  if (k0 < 0) throw std::invalid_argument("StretchedPropagator: k0 must be nonnegative");
  layout_ = assemble_stretched_generator(grid_, alpha_, 0.0);

  // Diagonal part: family Fokker-Planck eigendecompositions.
  half_.resize(grid_->n_max + 1);
  OperatorMatrix lh = assemble_Lh(grid_);
  for (int nu = 0; nu <= grid_->n_max; ++nu) {
    const auto* b = lh.block(nu);
    Eigen::SelfAdjointEigenSolver<MatrixXr> es(b->A.real());
    if (es.info() != Eigen::Success)
      throw NumericalError("StretchedPropagator: family eigensolve failed");
    half_[nu].Q = es.eigenvectors();
    half_[nu].lambda = es.eigenvalues();
  }

  // Interaction part at k = 0: everything except the diagonal Fokker-Planck.
  lambda_part_.resize(layout_.blocks.size());
  for (size_t bi = 0; bi < layout_.blocks.size(); ++bi) {
    const auto& b = layout_.blocks[bi];
    MatrixXc L = b.A;
    for (const auto& mem : b.members) {
      L.block(mem.offset, mem.offset, mem.m, mem.m) -=
          lh.block(std::abs(mem.n))->A +
          member_shift(mem.comp) * MatrixXc::Identity(mem.m, mem.m);
    }
    lambda_part_[bi] = std::move(L);
  }

  // Coupling samples on Chebyshev-Lobatto nodes in k over [0, k0].
  if (k0_ > 0 && alpha_ != 0) {
    const int n_cheb = 17;
    h_nodes_.resize(n_cheb);
    h_samples_.resize(n_cheb);
    for (int j = 0; j < n_cheb; ++j) {
      const Real x = 0.5 * (1.0 + std::cos(kPi * j / (n_cheb - 1)));
      h_nodes_[j] = k0_ * x;
      OperatorMatrix H = assemble_H(grid_, h_nodes_[j]);
      h_samples_[j].resize(H.blocks.size());
      for (size_t bi = 0; bi < H.blocks.size(); ++bi)
        h_samples_[j][bi] = H.blocks[bi].A;
    }
    // Validate the interpolation against a direct build away from the nodes.
    const Real k_test = 0.373 * k0_;
    OperatorMatrix Ht = assemble_H(grid_, k_test);
    Real worst = 0;
    for (size_t bi = 0; bi < Ht.blocks.size(); ++bi) {
      const MatrixXc interp =
          interaction(static_cast<int>(bi), -std::log(k_test / k0_)) - lambda_part_[bi];
      const MatrixXc direct = -alpha_ * Ht.blocks[bi].A;
      const Real scale = std::max(direct.norm(), 1e-30);
      worst = std::max(worst, (interp - direct).norm() / scale);
    }
    if (worst > 1e-6)
      throw NumericalError("StretchedPropagator: coupling interpolation defect " +
                           std::to_string(worst));
  }
}

// Interaction matrix B(t) = lambda_part - alpha H(k(t)) for block bi.
MatrixXc StretchedPropagator::interaction(int bi, Real t) const {
  MatrixXc B = lambda_part_[bi];
  if (k0_ > 0 && alpha_ != 0) {
    const Real k = k_of(t);
    const int n = static_cast<int>(h_nodes_.size());
    int exact = -1;
    for (int j = 0; j < n; ++j)
      if (std::abs(k - h_nodes_[j]) < 1e-14 * std::max(1.0, k0_)) exact = j;
    if (exact >= 0) {
      B -= alpha_ * h_samples_[exact][bi];
      return B;
    }
    // Barycentric interpolation over the Lobatto nodes.
    Real den = 0;
    std::vector<Real> c(n);
    for (int j = 0; j < n; ++j) {
      Real w = (j % 2 == 0) ? 1.0 : -1.0;
      if (j == 0 || j == n - 1) w *= 0.5;
      c[j] = w / (k - h_nodes_[j]);
      den += c[j];
    }
    for (int j = 0; j < n; ++j) B -= (alpha_ * c[j] / den) * h_samples_[j][bi];
  }
  return B;
}

void StretchedPropagator::advance(int bi, MatrixXc& X, Real t0, int n_steps) const {
  const auto& b = layout_.blocks[bi];

  auto half_step = [&](MatrixXc& Y) {
    for (const auto& mem : b.members) {
      const auto& hs = half_[std::abs(mem.n)];
      auto seg = Y.middleRows(mem.offset, mem.m);
      const ArrayXr decay =
          ((hs.lambda.array() + member_shift(mem.comp)) * (dt_ / 2.0)).exp();
      seg = hs.Q * (decay.matrix().asDiagonal() * (hs.Q.transpose() * seg));
    }
  };

  Real t = t0;
  for (int s = 0; s < n_steps; ++s) {
    if (k0_ > 0) {
      // analytic factor for the -k(t)^2 term over this step
      const Real f = std::exp(
          -0.5 * k0_ * k0_ * (std::exp(-2.0 * t) - std::exp(-2.0 * (t + dt_))));
      X *= f;
    }
    half_step(X);
    if (alpha_ != 0) {
      const MatrixXc B1 = interaction(bi, t);
      const MatrixXc B2 = interaction(bi, t + dt_ / 2.0);
      const MatrixXc B3 = interaction(bi, t + dt_);
      const MatrixXc k1 = B1 * X;
      const MatrixXc k2 = B2 * (X + (dt_ / 2.0) * k1);
      const MatrixXc k3 = B2 * (X + (dt_ / 2.0) * k2);
      const MatrixXc k4 = B3 * (X + dt_ * k3);
      X += (dt_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    half_step(X);
    t += dt_;
  }
}

// ---------------------------------------------------------------------------
// Evolutions
// ---------------------------------------------------------------------------

namespace {

struct TraceBuilder {
  std::vector<Real> times, nh, n3, kk, circ;
  std::vector<std::pair<Real, ModeField>> snaps;
  int snapshot_every = 0;
  int sample_index = 0;

  void record(Real t, const ModeField& w, const WeightSpec& m, Real k) {
    times.push_back(t);
    if (w.components == 3) {
      const Real h1 = weighted_norm_component(w, 0, m);
      const Real h2 = weighted_norm_component(w, 1, m);
      nh.push_back(std::sqrt(h1 * h1 + h2 * h2));
      n3.push_back(weighted_norm_component(w, 2, m));
    } else {
      nh.push_back(0.0);
      n3.push_back(weighted_norm_component(w, 0, m));
    }
    kk.push_back(k);
    ModeField w3(w.grid, 1);
    w3.h(0, 0) = w.h(w.components == 3 ? 2 : 0, 0);
    circ.push_back(circulation(w3));
    if (snapshot_every > 0 && sample_index % snapshot_every == 0)
      snaps.emplace_back(t, w);
    ++sample_index;
  }

  EvolutionTrace finish(Real alpha, Real k0, Real dt, const WeightSpec& m) {
    EvolutionTrace tr;
    const auto n = static_cast<Eigen::Index>(times.size());
    tr.times = Eigen::Map<ArrayXr>(times.data(), n);
    tr.norm_h = Eigen::Map<ArrayXr>(nh.data(), n);
    tr.norm_3 = Eigen::Map<ArrayXr>(n3.data(), n);
    tr.k_traj = Eigen::Map<ArrayXr>(kk.data(), n);
    tr.circulation = Eigen::Map<ArrayXr>(circ.data(), n);
    tr.alpha = alpha;
    tr.k0 = k0;
    tr.dt = dt;
    tr.m = m;
    tr.snapshots = std::move(snaps);
    return tr;
  }
};

EvolutionTrace evolve_stretched_impl(const ModeField& w0, Real k0, Real alpha,
                                     const WeightSpec& m, Real T, Real dt, Real dt_out,
                                     int snapshot_every) {
  if (w0.components != 3)
    throw std::invalid_argument("evolve: 3-component initial data expected");
  StretchedPropagator prop(w0.grid, alpha, k0, dt);
  const auto& layout = prop.layout();

  std::vector<MatrixXc> slabs(layout.blocks.size());
  for (size_t bi = 0; bi < layout.blocks.size(); ++bi)
    slabs[bi] = layout.gather(w0, layout.blocks[bi]);

  auto reconstruct = [&]() {
    ModeField w(w0.grid, 3);
    for (size_t bi = 0; bi < layout.blocks.size(); ++bi)
      layout.scatter(slabs[bi].col(0), layout.blocks[bi], w);
    return w;
  };

  TraceBuilder tb;
  tb.snapshot_every = snapshot_every;
  const int steps_per_sample = std::max(1, static_cast<int>(std::round(dt_out / dt)));
  const int n_samples = static_cast<int>(std::floor(T / (steps_per_sample * dt))) + 1;

  tb.record(0.0, w0, m, k0);
  Real prev_norm = std::max({tb.nh.back(), tb.n3.back(), 1e-300});
  Real t = 0;
  for (int s = 1; s < n_samples; ++s) {
    for (size_t bi = 0; bi < layout.blocks.size(); ++bi)
      prop.advance(static_cast<int>(bi), slabs[bi], t, steps_per_sample);
    t += steps_per_sample * dt;
    ModeField w = reconstruct();
    tb.record(t, w, m, prop.k_of(t));
    const Real now = std::max(tb.nh.back(), tb.n3.back());
    if (now > 10.0 * prev_norm)
      throw NumericalError("evolve: instability detected, reduce dt");
    prev_norm = std::max(now, 1e-300);
  }
  return tb.finish(alpha, k0, dt, m);
}

}  // namespace

EvolutionTrace evolve_linear_2dvec(const ModeField& w0, Real alpha, const WeightSpec& m,
                                   Real T, Real dt, Real dt_out, int snapshot_every) {
  return evolve_stretched_impl(w0, 0.0, alpha, m, T, dt, dt_out, snapshot_every);
}

EvolutionTrace evolve_stretched(const ModeField& w0, Real k0, Real alpha,
                                const WeightSpec& m, Real T, Real dt, Real dt_out,
                                int snapshot_every) {
  return evolve_stretched_impl(w0, k0, alpha, m, T, dt, dt_out, snapshot_every);
}

EvolutionTrace evolve_nonlinear_2d(const ModeField& omega3_0, Real alpha,
                                   const WeightSpec& m, Real T, Real dt, Real dt_out,
                                   int snapshot_every) {
  if (omega3_0.components != 1)
    throw std::invalid_argument("evolve_nonlinear_2d: scalar initial data expected");
  const GridPtr& gp = omega3_0.grid;
  const SpectralGrid& g = *gp;
  const int nm = g.n_max;
  const auto nf = g.u_fine.size();

  // Exact Fokker-Planck half-steps; advection, feedback, and the quadratic
  // term together form the explicit stage.
  OperatorMatrix lh = assemble_Lh(gp);
  std::vector<MatrixXr> Q(nm + 1);
  std::vector<VectorXr> lam(nm + 1);
  for (int nu = 0; nu <= nm; ++nu) {
    Eigen::SelfAdjointEigenSolver<MatrixXr> es(lh.block(nu)->A.real());
    Q[nu] = es.eigenvectors();
    lam[nu] = es.eigenvalues();
  }
  std::vector<MatrixXc> lin(2 * nm + 1);
  {
    OperatorMatrix adv = assemble_advection(gp);
    OperatorMatrix fb = assemble_feedback3(gp);
    for (int n = -nm; n <= nm; ++n)
      lin[n + nm] = -alpha * (adv.block(n)->A + fb.block(n)->A);
  }

  // Dealias-node basis tables for the quadratic term.
  std::vector<MatrixXr> Bf(nm + 1), dBf(nm + 1);
  for (int nu = 0; nu <= nm; ++nu) {
    const auto& fam = g.families[nu];
    MatrixXr P, dP, d2P;
    fam.poly.evaluate_with_derivatives(g.u_fine, P, dP, d2P);
    Bf[nu].resize(nf, fam.m);
    dBf[nu].resize(nf, fam.m);
    const ArrayXr rnu = g.r_fine.pow(nu);
    const ArrayXr rnum1 = g.r_fine.pow(nu - 1);
    for (int l = 0; l < fam.m; ++l) {
      const ArrayXr p = P.col(l).array(), dp = dP.col(l).array();
      Bf[nu].col(l) = (rnu * g.env_fine * p).matrix();
      dBf[nu].col(l) =
          (rnum1 * g.env_fine * (nu * p + 2.0 * g.u_fine * dp - g.u_fine * p / 4.0))
              .matrix();
    }
  }

  // Quadratic term N(w) = (K2D * w, grad) w at the dealias nodes: velocities
  // from the stream kernels, physical derivatives from the basis tables,
  // exact mode convolution (an aliasing-free Galerkin product), projection.
  auto quadratic = [&](const std::vector<VectorXc>& coeffs) {
    const int ne = nm + 1;
    MatrixXc up = MatrixXc::Zero(2 * ne + 1, nf), um = up;
    MatrixXc dwp = MatrixXc::Zero(2 * ne + 1, nf), dwm = dwp;
    for (int n = -nm; n <= nm; ++n) {
      const int nu = std::abs(n);
      const auto& ker = detail::laplace_kernels(gp, nu);
      const VectorXc& c = coeffs[n + nm];
      const ArrayXc dpsi = (ker.dpsi_fine.cast<Complex>() * c).array();
      ArrayXc npsi_r = ArrayXc::Zero(nf);
      if (n != 0)
        npsi_r = (ker.psi_fine.cast<Complex>() * c).array() *
                 (static_cast<Real>(n) / g.r_fine).cast<Complex>();
      up.row(n + 1 + ne) += (Complex(0, 1) * (dpsi - npsi_r)).matrix().transpose();
      um.row(n - 1 + ne) += (Complex(0, -1) * (dpsi + npsi_r)).matrix().transpose();

      const ArrayXc hval = (Bf[nu].cast<Complex>() * c).array();
      const ArrayXc hder = (dBf[nu].cast<Complex>() * c).array();
      const ArrayXc base = hder - (g.r_fine / 4.0).cast<Complex>() * hval;
      const ArrayXc nr = (static_cast<Real>(n) / g.r_fine).cast<Complex>() * hval;
      dwp.row(n + 1 + ne) +=
          ((base - nr) * g.env_fine.cast<Complex>()).matrix().transpose();
      dwm.row(n - 1 + ne) +=
          ((base + nr) * g.env_fine.cast<Complex>()).matrix().transpose();
    }
    std::vector<VectorXc> out(2 * nm + 1);
    for (int n = -nm; n <= nm; ++n) {
      ArrayXc vals = ArrayXc::Zero(nf);
      for (int n1 = -ne; n1 <= ne; ++n1) {
        const int n2 = n - n1;
        if (std::abs(n2) > ne) continue;
        vals += 0.5 * (up.row(n1 + ne).transpose().array() *
                           dwm.row(n2 + ne).transpose().array() +
                       um.row(n1 + ne).transpose().array() *
                           dwp.row(n2 + ne).transpose().array());
      }
      const ArrayXc flat = vals / g.env_fine.cast<Complex>();
      out[n + nm] = Bf[std::abs(n)].transpose().cast<Complex>() *
                    (flat * g.w_rdr_fine.cast<Complex>()).matrix();
    }
    return out;
  };

  auto stage_rhs = [&](const std::vector<VectorXc>& coeffs) {
    std::vector<VectorXc> rhs = quadratic(coeffs);
    for (int n = -nm; n <= nm; ++n)
      rhs[n + nm] = lin[n + nm] * coeffs[n + nm] - rhs[n + nm];
    return rhs;
  };

  std::vector<VectorXc> coeffs(2 * nm + 1);
  for (int n = -nm; n <= nm; ++n) coeffs[n + nm] = modal_coords(omega3_0, 0, n);

  auto reconstruct = [&]() {
    ModeField w(gp, 1);
    for (int n = -nm; n <= nm; ++n) set_from_modal(w, 0, n, coeffs[n + nm]);
    return w;
  };

  auto half_step = [&](std::vector<VectorXc>& c) {
    for (int n = -nm; n <= nm; ++n) {
      const int nu = std::abs(n);
      const ArrayXr decay = (lam[nu].array() * (dt / 2.0)).exp();
      c[n + nm] = Q[nu] * (decay.matrix().asDiagonal() * (Q[nu].transpose() * c[n + nm]));
    }
  };

  TraceBuilder tb;
  tb.snapshot_every = snapshot_every;
  const int steps_per_sample = std::max(1, static_cast<int>(std::round(dt_out / dt)));
  const int n_samples = static_cast<int>(std::floor(T / (steps_per_sample * dt))) + 1;
  tb.record(0.0, reconstruct(), m, 0.0);
  Real prev_norm = std::max(tb.n3.back(), 1e-300);

  for (int s = 1; s < n_samples; ++s) {
    for (int q = 0; q < steps_per_sample; ++q) {
      half_step(coeffs);
      const auto k1 = stage_rhs(coeffs);
      std::vector<VectorXc> tmp(coeffs.size());
      for (size_t i = 0; i < coeffs.size(); ++i) tmp[i] = coeffs[i] + (dt / 2.0) * k1[i];
      const auto k2 = stage_rhs(tmp);
      for (size_t i = 0; i < coeffs.size(); ++i) tmp[i] = coeffs[i] + (dt / 2.0) * k2[i];
      const auto k3 = stage_rhs(tmp);
      for (size_t i = 0; i < coeffs.size(); ++i) tmp[i] = coeffs[i] + dt * k3[i];
      const auto k4 = stage_rhs(tmp);
      for (size_t i = 0; i < coeffs.size(); ++i)
        coeffs[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      half_step(coeffs);
    }
    const Real t = s * steps_per_sample * dt;
    tb.record(t, reconstruct(), m, 0.0);
    if (tb.n3.back() > 10.0 * prev_norm)
      throw NumericalError("evolve_nonlinear_2d: instability detected, reduce dt");
    prev_norm = std::max(tb.n3.back(), 1e-300);
  }
  return tb.finish(alpha, 0.0, dt, m);
}

}  // namespace bspec
