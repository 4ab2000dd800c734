#include "bspec/biot_savart.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace bspec {

namespace {

// ---------------------------------------------------------------------------
// Per-grid workspace: integration rule whose panel boundaries contain every
// node and dealias node, physical basis values at the integration points,
// stream-function kernels, and a cache of screened kernels keyed by k.
// ---------------------------------------------------------------------------
struct Workspace {
  GridPtr grid;
  CompositeRule integ;          // in r, boundaries include nodes and fine nodes
  std::vector<int> node_bnd;    // boundary index of node i
  std::vector<int> fine_bnd;    // boundary index of fine node j
  std::vector<MatrixXr> phys;   // per nu: physical basis values at integ points
  std::vector<detail::LaplaceKernels> laplace;
  std::map<std::pair<int, Real>, detail::HelmholtzKernels> helm;
  std::mutex helm_mutex;
};

std::shared_ptr<Workspace> workspace_for(const GridPtr& grid);

// ---------------------------------------------------------------------------
// Homogeneous radial solutions of y'' + y'/r - (nu^2/r^2 + k^2) y = 0.
// The known power is factored out, y = r^a z with a = +-nu, leaving
//   z'' + (b/r) z' - k^2 z = 0,   b = 2a + 1,
// whose solutions are smooth through r = 0; RK4 then holds full accuracy on
// the scale max(r, 1/k) instead of r/nu.
// ---------------------------------------------------------------------------
struct OdeState {
  Real y, dy;
};

OdeState rk4_step(Real b, Real k2, Real r, Real h, OdeState s) {
  auto f = [&](Real rr, const OdeState& v) {
    return OdeState{v.dy, -b * v.dy / rr + k2 * v.y};
  };
  const OdeState k1 = f(r, s);
  const OdeState k2s = f(r + h / 2, {s.y + h / 2 * k1.y, s.dy + h / 2 * k1.dy});
  const OdeState k3 = f(r + h / 2, {s.y + h / 2 * k2s.y, s.dy + h / 2 * k2s.dy});
  const OdeState k4 = f(r + h, {s.y + h * k3.y, s.dy + h * k3.dy});
  return {s.y + h / 6 * (k1.y + 2 * k2s.y + 2 * k3.y + k4.y),
          s.dy + h / 6 * (k1.dy + 2 * k2s.dy + 2 * k3.dy + k4.dy)};
}

// March z from r0 to r1 (either direction); steps limited by the k-scale, the
// stability bound of the b/r coefficient, and h_cap.
OdeState march(Real b, Real k, Real r0, Real r1, OdeState s, Real h_cap) {
  const Real k2 = k * k;
  Real r = r0;
  const Real dir = (r1 > r0) ? 1.0 : -1.0;
  const Real babs = std::abs(b) + 1.0;
  while (dir * (r1 - r) > 1e-14 * std::max(1.0, std::abs(r1))) {
    Real h = std::min(h_cap, 0.15 * r / babs);
    if (k > 0) h = std::min(h, 0.02 / k);
    h = std::min(h, dir * (r1 - r));
    s = rk4_step(b, k2, r, dir * h, s);
    r += dir * h;
  }
  return s;
}

// Values of (y_reg, y_dec) and derivatives at an increasing list of radii.
struct HomSamples {
  ArrayXr y_reg, dy_reg, y_dec, dy_dec;
};

HomSamples sample_homogeneous(int nu, Real k, const ArrayXr& pts, Real r_max) {
  HomSamples out;
  const auto n = pts.size();
  out.y_reg.resize(n);
  out.dy_reg.resize(n);
  out.y_dec.resize(n);
  out.dy_dec.resize(n);
  const Real h_int = r_max / 8192.0;

  // Regular solution y = r^nu z, z = 1 + a1 r^2 + a2 r^4 + ... near 0.
  {
    const Real b = 2.0 * nu + 1.0;
    const Real r0 = pts[0];
    const Real a1 = k * k / (4.0 * (nu + 1));
    const Real a2 = k * k * k * k / (32.0 * (nu + 1) * (nu + 2));
    OdeState s{1.0 + a1 * r0 * r0 + a2 * std::pow(r0, 4),
               2.0 * a1 * r0 + 4.0 * a2 * r0 * r0 * r0};
    Real rcur = r0;
    for (Eigen::Index i = 0; i < n; ++i) {
      s = march(b, k, rcur, pts[i], s, h_int);
      rcur = pts[i];
      const Real rn = std::pow(rcur, nu);
      out.y_reg[i] = rn * s.y;
      out.dy_reg[i] = rn * (s.dy + nu * s.y / rcur);
    }
  }

  // Decaying solution y = r^-nu z: start far enough out that the admixture of
  // the growing mode is below roundoff after marching back inside.
  {
    const Real b = 1.0 - 2.0 * nu;
    const Real r_far = r_max + 18.0 / k;
    const Real dy0 = -(k + 0.5 / r_far);  // logarithmic derivative of K_nu, leading order
    // z = r^nu y: z' = r^nu (y' + nu y / r) with y(r_far) = 1.
    const Real zf = std::pow(r_far, nu);
    OdeState s{zf, zf * (dy0 + nu / r_far)};
    Real rcur = r_far;
    s = march(b, k, rcur, pts[n - 1], s, (r_far - r_max) / 2000.0);
    rcur = pts[n - 1];
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      s = march(b, k, rcur, pts[i], s, h_int);
      rcur = pts[i];
      const Real rn = std::pow(rcur, -nu);
      out.y_dec[i] = rn * s.y;
      out.dy_dec[i] = rn * (s.dy - nu * s.y / rcur);
    }
  }
  return out;
}

std::shared_ptr<Workspace> workspace_for(const GridPtr& grid) {
  static std::mutex mu;
  static std::map<const SpectralGrid*, std::shared_ptr<Workspace>> table;
  std::lock_guard<std::mutex> lock(mu);
  auto it = table.find(grid.get());
  if (it != table.end()) return it->second;

  auto ws = std::make_shared<Workspace>();
  ws->grid = grid;

  std::vector<Real> bnds;
  bnds.push_back(0.0);
  for (int i = 0; i < grid->n_r; ++i) bnds.push_back(grid->r[i]);
  for (Eigen::Index j = 0; j < grid->r_fine.size(); ++j) bnds.push_back(grid->r_fine[j]);
  bnds.push_back(grid->r_max);
  std::sort(bnds.begin(), bnds.end());
  bnds.erase(std::unique(bnds.begin(), bnds.end()), bnds.end());
  ArrayXr bounds = Eigen::Map<ArrayXr>(bnds.data(), bnds.size());
  ws->integ = composite_rule(bounds, 16);

  auto boundary_index = [&](Real r) {
    const auto pos = std::lower_bound(bnds.begin(), bnds.end(), r - 1e-12);
    return static_cast<int>(pos - bnds.begin());
  };
  for (int i = 0; i < grid->n_r; ++i) ws->node_bnd.push_back(boundary_index(grid->r[i]));
  for (Eigen::Index j = 0; j < grid->r_fine.size(); ++j)
    ws->fine_bnd.push_back(boundary_index(grid->r_fine[j]));

  const ArrayXr s = ws->integ.x;
  const ArrayXr us = s.square();
  const ArrayXr decay = (-us / 4.0).exp();
  ws->phys.resize(grid->n_max + 1);
  ws->laplace.resize(grid->n_max + 1);
  for (int nu = 0; nu <= grid->n_max; ++nu) {
    const auto& fam = grid->families[nu];
    MatrixXr P = fam.poly.evaluate(us);
    ws->phys[nu].resize(s.size(), fam.m);
    const ArrayXr rnu = s.pow(nu);
    for (int l = 0; l < fam.m; ++l)
      ws->phys[nu].col(l) = (P.col(l).array() * rnu * decay).matrix();
  }

  // Stream-function kernels. For nu >= 1:
  //   psi(r)  = -(1/(2 nu)) [ r^-nu Ilow + r^nu Ihigh ]
  //   psi'(r) =  (1/2)      [ r^-(nu+1) Ilow - r^(nu-1) Ihigh ]
  // with Ilow = int_0^r s^nu w s ds, Ihigh = int_r^rmax s^-nu w s ds.
  // For nu = 0 only psi'(r) = (1/r) int_0^r w s ds enters the velocity.
  for (int nu = 0; nu <= grid->n_max; ++nu) {
    const auto& fam = grid->families[nu];
    auto& ker = ws->laplace[nu];
    const int n_r = grid->n_r;
    const int n_f = static_cast<int>(grid->r_fine.size());
    ker.psi = MatrixXr::Zero(n_r, fam.m);
    ker.dpsi = MatrixXr::Zero(n_r, fam.m);
    ker.psi_fine = MatrixXr::Zero(n_f, fam.m);
    ker.dpsi_fine = MatrixXr::Zero(n_f, fam.m);
    for (int l = 0; l < fam.m; ++l) {
      const ArrayXr w = ws->phys[nu].col(l).array();
      if (nu == 0) {
        ArrayXr pre = ws->integ.prefix((w * s).eval());
        for (int i = 0; i < n_r; ++i)
          ker.dpsi(i, l) = pre[ws->node_bnd[i]] / grid->r[i];
        for (int j = 0; j < n_f; ++j)
          ker.dpsi_fine(j, l) = pre[ws->fine_bnd[j]] / grid->r_fine[j];
        continue;
      }
      ArrayXr low = ws->integ.prefix((w * s.pow(nu + 1)).eval());
      ArrayXr hig = ws->integ.prefix((w * s.pow(1 - nu)).eval());
      const Real hig_total = hig[hig.size() - 1];
      auto fill = [&](int row, Real r, int bnd, MatrixXr& psi, MatrixXr& dpsi) {
        const Real Il = low[bnd];
        const Real Ih = hig_total - hig[bnd];
        const Real rn = std::pow(r, nu);
        psi(row, l) = -0.5 / nu * (Il / rn + Ih * rn);
        dpsi(row, l) = 0.5 * (Il / (rn * r) - Ih * rn / r);
      };
      for (int i = 0; i < n_r; ++i)
        fill(i, grid->r[i], ws->node_bnd[i], ker.psi, ker.dpsi);
      for (int j = 0; j < n_f; ++j)
        fill(j, grid->r_fine[j], ws->fine_bnd[j], ker.psi_fine, ker.dpsi_fine);
    }
  }

  table[grid.get()] = ws;
  return ws;
}

}  // namespace

namespace detail {

RadialHomogeneous homogeneous_solutions(const GridPtr& grid, int nu, Real k) {
  if (!(k > 0)) throw std::invalid_argument("homogeneous_solutions: need k > 0");
  auto ws = workspace_for(grid);
  RadialHomogeneous out;
  out.pts = ws->integ.x;
  HomSamples h = sample_homogeneous(nu, k, out.pts, grid->r_max);
  out.y_reg = h.y_reg;
  out.dy_reg = h.dy_reg;
  out.y_dec = h.y_dec;
  out.dy_dec = h.dy_dec;
  ArrayXr c = out.pts * (out.dy_reg * out.y_dec - out.y_reg * out.dy_dec);
  out.green_scale = c[c.size() / 2];
  return out;
}

const LaplaceKernels& laplace_kernels(const GridPtr& grid, int nu) {
  return workspace_for(grid)->laplace[nu];
}

const HelmholtzKernels& helmholtz_kernels(const GridPtr& grid, int nu, Real k) {
  auto ws = workspace_for(grid);
  std::lock_guard<std::mutex> lock(ws->helm_mutex);
  const auto key = std::make_pair(nu, k);
  auto it = ws->helm.find(key);
  if (it != ws->helm.end()) return it->second;

  // Homogeneous solutions sampled at the integration points and at the nodes
  // in one merged increasing pass, so node values carry no interpolation error.
  const ArrayXr& s = ws->integ.x;
  std::vector<Real> merged(s.data(), s.data() + s.size());
  std::vector<int> node_at(grid->n_r);
  for (int i = 0; i < grid->n_r; ++i) merged.push_back(grid->r[i]);
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  ArrayXr all = Eigen::Map<ArrayXr>(merged.data(), merged.size());
  for (int i = 0; i < grid->n_r; ++i) {
    const auto pos = std::lower_bound(merged.begin(), merged.end(), grid->r[i] - 1e-12);
    node_at[i] = static_cast<int>(pos - merged.begin());
  }
  std::vector<int> integ_at(s.size());
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    const auto pos = std::lower_bound(merged.begin(), merged.end(), s[j] - 1e-12);
    integ_at[j] = static_cast<int>(pos - merged.begin());
  }

  HomSamples hom = sample_homogeneous(nu, k, all, grid->r_max);

  // Green scale C0 = r (y_reg' y_dec - y_reg y_dec'); Abel's identity makes
  // it constant, and its drift measures the march accuracy.
  ArrayXr c = all * (hom.dy_reg * hom.y_dec - hom.y_reg * hom.dy_dec);
  const Real c0 = c[c.size() / 2];
  const Real drift = ((c - c0).abs() / std::abs(c0)).maxCoeff();
  if (drift > 1e-7)
    throw NumericalError("helmholtz_kernels: Wronskian drift " + std::to_string(drift));

  ArrayXr yreg_i(s.size()), ydec_i(s.size());
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    yreg_i[j] = hom.y_reg[integ_at[j]];
    ydec_i[j] = hom.y_dec[integ_at[j]];
  }

  const auto& fam = grid->families[nu];
  HelmholtzKernels ker;
  ker.wronskian_drift = drift;
  ker.A = MatrixXr::Zero(grid->n_r, fam.m);
  ker.dA = MatrixXr::Zero(grid->n_r, fam.m);
  for (int l = 0; l < fam.m; ++l) {
    const ArrayXr w = ws->phys[nu].col(l).array();
    ArrayXr low = ws->integ.prefix((w * yreg_i * s).eval());
    ArrayXr hig = ws->integ.prefix((w * ydec_i * s).eval());
    const Real hig_total = hig[hig.size() - 1];
    for (int i = 0; i < grid->n_r; ++i) {
      const int bnd = ws->node_bnd[i];
      const int at = node_at[i];
      const Real Il = low[bnd];
      const Real Ih = hig_total - hig[bnd];
      ker.A(i, l) = (hom.y_dec[at] * Il + hom.y_reg[at] * Ih) / c0;
      ker.dA(i, l) = (hom.dy_dec[at] * Il + hom.dy_reg[at] * Ih) / c0;
    }
  }

  auto [pos, inserted] = ws->helm.emplace(key, std::move(ker));
  (void)inserted;
  return pos->second;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Velocity fields
// ---------------------------------------------------------------------------

VelocityField::VelocityField(GridPtr grid_in, int components_in, bool horizontal)
    : grid(std::move(grid_in)), components(components_in), horizontal_only(horizontal) {
  n_ext = grid->n_max + 1;
  data = MatrixXc::Zero(components * (2 * n_ext + 1), grid->n_r);
}

namespace {

// Potentials A_c,n and radial derivatives for all circular components of w at
// wavenumber k >= 0, plus assembled circular velocity components
//   u+ = -i d+ A3 - k A+,  u- = i d- A3 + k A-,  u3 = (d- A+ - d+ A-)/(2i),
// where d+- act on mode n as (d/dr -+ n/r) and shift the mode by +-1.
struct Mode3DSolution {
  GridPtr grid;
  Real k = 0;
  int n_ext = 0;
  std::vector<std::vector<VectorXc>> A, dA;  // [c][n + n_max], c in {+,-,3}
  MatrixXc up, um, uz;                       // (2 n_ext + 1) x n_r

  VectorXc mode_row(const MatrixXc& M, int m) const {
    if (std::abs(m) > n_ext) return VectorXc::Zero(grid->n_r);
    return M.row(m + n_ext).transpose();
  }
  // Physical source values of circular component c at mode n.
  VectorXc source(const ModeField& w, int c, int n) const {
    const VectorXc w1 = w.h(0, n).transpose();
    const VectorXc w2 = w.h(1, n).transpose();
    VectorXc src;
    if (c == 0) src = w1 + Complex(0, 1) * w2;
    else if (c == 1) src = w1 - Complex(0, 1) * w2;
    else src = w.h(2, n).transpose();
    return (src.array() * grid->env.cast<Complex>()).matrix();
  }
  // A'' from the radial equation.
  VectorXc d2A(const ModeField& w, int c, int n) const {
    const ArrayXr inv_r = 1.0 / grid->r;
    const int nm = grid->n_max;
    const ArrayXc coef =
        (static_cast<Real>(n) * static_cast<Real>(n) * inv_r.square() + k * k).cast<Complex>();
    return (-dA[c][n + nm].array() * inv_r.cast<Complex>() + coef * A[c][n + nm].array() -
            source(w, c, n).array())
        .matrix();
  }
  // d/dr of velocity mode m for component which (0:+ 1:- 2:3).
  VectorXc du_mode(const ModeField& w, int which, int m) const {
    const int nm = grid->n_max;
    const ArrayXr inv_r = 1.0 / grid->r;
    VectorXc out = VectorXc::Zero(grid->n_r);
    auto dshift = [&](int c, int n, Real sign_n) -> VectorXc {
      // d/dr [ A' -+ n A / r ] = A'' -+ n (A'/r - A/r^2)
      const int q = n + nm;
      return (d2A(w, c, n).array() +
              sign_n * static_cast<Real>(n) *
                  (dA[c][q].array() * inv_r.cast<Complex>() -
                   A[c][q].array() * inv_r.square().cast<Complex>()))
          .matrix();
    };
    if (which == 0) {
      if (std::abs(m - 1) <= nm) out += Complex(0, -1) * dshift(2, m - 1, -1.0);
      if (k > 0 && std::abs(m) <= nm) out -= k * dA[0][m + nm];
    } else if (which == 1) {
      if (std::abs(m + 1) <= nm) out += Complex(0, 1) * dshift(2, m + 1, +1.0);
      if (k > 0 && std::abs(m) <= nm) out += k * dA[1][m + nm];
    } else {
      if (std::abs(m + 1) <= nm) out += Complex(0, -0.5) * dshift(0, m + 1, +1.0);
      if (std::abs(m - 1) <= nm) out += Complex(0, 0.5) * dshift(1, m - 1, -1.0);
    }
    return out;
  }
};

Mode3DSolution solve_mode3d(const ModeField& w, Real k) {
  const GridPtr& g = w.grid;
  const int nm = g->n_max;
  Mode3DSolution sol;
  sol.grid = g;
  sol.k = k;
  sol.n_ext = nm + 1;
  sol.A.assign(3, std::vector<VectorXc>(2 * nm + 1));
  sol.dA.assign(3, std::vector<VectorXc>(2 * nm + 1));

  for (int n = -nm; n <= nm; ++n) {
    const VectorXc w1 = w.h(0, n).transpose();
    const VectorXc w2 = w.h(1, n).transpose();
    const VectorXc w3 = w.h(2, n).transpose();
    const VectorXc wp = w1 + Complex(0, 1) * w2;
    const VectorXc wm = w1 - Complex(0, 1) * w2;
    const auto& fam = g->family(n);
    auto solve_one = [&](const VectorXc& src, VectorXc& A, VectorXc& dA) {
      const VectorXc c = fam.A.cast<Complex>() * src;
      if (k > 0) {
        const auto& ker = detail::helmholtz_kernels(g, std::abs(n), k);
        A = ker.A.cast<Complex>() * c;
        dA = ker.dA.cast<Complex>() * c;
      } else {
        // Laplace limit A = -psi; for n = 0 only derivative combinations
        // enter the velocity, and psi itself is defined up to a constant.
        const auto& ker = detail::laplace_kernels(g, std::abs(n));
        A = (n == 0) ? VectorXc::Zero(g->n_r) : VectorXc(-(ker.psi.cast<Complex>() * c));
        dA = -(ker.dpsi.cast<Complex>() * c);
      }
    };
    solve_one(wp, sol.A[0][n + nm], sol.dA[0][n + nm]);
    solve_one(wm, sol.A[1][n + nm], sol.dA[1][n + nm]);
    solve_one(w3, sol.A[2][n + nm], sol.dA[2][n + nm]);
  }

  const int R = 2 * sol.n_ext + 1;
  sol.up = MatrixXc::Zero(R, g->n_r);
  sol.um = MatrixXc::Zero(R, g->n_r);
  sol.uz = MatrixXc::Zero(R, g->n_r);
  const ArrayXr inv_r = 1.0 / g->r;
  auto dplus = [&](const VectorXc& A, const VectorXc& dA, int n) {
    return (dA.array() - static_cast<Real>(n) * inv_r.cast<Complex>() * A.array()).matrix();
  };
  auto dminus = [&](const VectorXc& A, const VectorXc& dA, int n) {
    return (dA.array() + static_cast<Real>(n) * inv_r.cast<Complex>() * A.array()).matrix();
  };

  for (int m = -sol.n_ext; m <= sol.n_ext; ++m) {
    VectorXc up = VectorXc::Zero(g->n_r), um = up, uz = up;
    if (std::abs(m - 1) <= nm) {
      up += Complex(0, -1) * dplus(sol.A[2][m - 1 + nm], sol.dA[2][m - 1 + nm], m - 1);
      uz += Complex(0, 0.5) * dplus(sol.A[1][m - 1 + nm], sol.dA[1][m - 1 + nm], m - 1);
    }
    if (std::abs(m + 1) <= nm) {
      um += Complex(0, 1) * dminus(sol.A[2][m + 1 + nm], sol.dA[2][m + 1 + nm], m + 1);
      uz += Complex(0, -0.5) * dminus(sol.A[0][m + 1 + nm], sol.dA[0][m + 1 + nm], m + 1);
    }
    if (k > 0 && std::abs(m) <= nm) {
      up -= k * sol.A[0][m + nm];
      um += k * sol.A[1][m + nm];
    }
    sol.up.row(m + sol.n_ext) = up.transpose();
    sol.um.row(m + sol.n_ext) = um.transpose();
    sol.uz.row(m + sol.n_ext) = uz.transpose();
  }
  return sol;
}

}  // namespace

VelocityField velocity_2d(const ModeField& omega3) {
  if (omega3.components != 1)
    throw std::invalid_argument("velocity_2d: scalar vorticity expected");
  const GridPtr& g = omega3.grid;
  const int n_ext = g->n_max + 1;
  MatrixXc up = MatrixXc::Zero(2 * n_ext + 1, g->n_r);
  MatrixXc um = MatrixXc::Zero(2 * n_ext + 1, g->n_r);
  for (int n = -g->n_max; n <= g->n_max; ++n) {
    const auto& ker = detail::laplace_kernels(g, std::abs(n));
    const VectorXc c = modal_coords(omega3, 0, n);
    const VectorXc dpsi = ker.dpsi.cast<Complex>() * c;
    VectorXc npsi_r = VectorXc::Zero(g->n_r);
    if (n != 0) {
      const VectorXc psi = ker.psi.cast<Complex>() * c;
      npsi_r = (psi.array() * (static_cast<Real>(n) / g->r).cast<Complex>()).matrix();
    }
    // u = grad^perp psi: u+ at mode n+1 is i (psi' - n psi/r),
    //                    u- at mode n-1 is -i (psi' + n psi/r).
    up.row(n + 1 + n_ext) += (Complex(0, 1) * (dpsi - npsi_r)).transpose();
    um.row(n - 1 + n_ext) += (Complex(0, -1) * (dpsi + npsi_r)).transpose();
  }
  VelocityField vel(g, 2, true);
  for (int m = -n_ext; m <= n_ext; ++m) {
    vel.u(0, m) = 0.5 * (up.row(m + n_ext) + um.row(m + n_ext));
    vel.u(1, m) = Complex(0, -0.5) * (up.row(m + n_ext) - um.row(m + n_ext));
  }
  return vel;
}

VelocityField velocity_mode3d(const ModeField& w, Real k) {
  if (w.components != 3)
    throw std::invalid_argument("velocity_mode3d: 3-component vorticity expected");
  if (k < 0) throw std::invalid_argument("velocity_mode3d: k must be nonnegative");
  Mode3DSolution sol = solve_mode3d(w, k);
  VelocityField vel(w.grid, 3, false);
  for (int m = -vel.n_ext; m <= vel.n_ext; ++m) {
    const int row = m + vel.n_ext;
    vel.u(0, m) = 0.5 * (sol.up.row(row) + sol.um.row(row));
    vel.u(1, m) = Complex(0, -0.5) * (sol.up.row(row) - sol.um.row(row));
    vel.u(2, m) = sol.uz.row(row);
  }
  return vel;
}

Complex VelocityField::value_at_node(int c, int node, Real theta) const {
  Complex v = 0;
  for (int n = -n_ext; n <= n_ext; ++n)
    v += u(c, n)(node) * std::polar(1.0, n * theta);
  return v;
}

namespace {

// Flattened coefficient of (d1 +- i d2) f at mode n +- 1, given the nodal
// flattened coefficient h of f at mode n:  h' - (r/4) h -+ (n/r) h,
// with h' evaluated through the modal basis derivative.
VectorXc shifted_derivative(const GridPtr& g, const VectorXc& h, int n, int sign) {
  const auto& fam = g->family(n);
  const VectorXc c = fam.A.cast<Complex>() * h;
  const VectorXc dh = fam.dB.cast<Complex>() * c;
  const ArrayXc hh = (fam.B.cast<Complex>() * c).array();
  return (dh.array() - (g->r / 4.0).cast<Complex>() * hh -
          static_cast<Real>(sign) * static_cast<Real>(n) * (1.0 / g->r).cast<Complex>() * hh)
      .matrix();
}

}  // namespace

ModeField curl_k_field(const ModeField& a, Real k) {
  if (a.components != 3) throw std::invalid_argument("curl_k_field: 3 components expected");
  const GridPtr& g = a.grid;
  const int nm = g->n_max;
  ModeField out(g, 3);
  // circular flattened components
  auto circ = [&](int n, int c) -> VectorXc {
    const VectorXc a1 = a.h(0, n).transpose();
    const VectorXc a2 = a.h(1, n).transpose();
    if (c == 0) return a1 + Complex(0, 1) * a2;
    if (c == 1) return a1 - Complex(0, 1) * a2;
    return a.h(2, n).transpose();
  };
  for (int m = -nm; m <= nm; ++m) {
    VectorXc cp = VectorXc::Zero(g->n_r), cmn = cp, cz = cp;
    if (std::abs(m - 1) <= nm) {
      cp += Complex(0, -1) * shifted_derivative(g, circ(m - 1, 2), m - 1, +1);
      cz += Complex(0, 0.5) * shifted_derivative(g, circ(m - 1, 1), m - 1, +1);
    }
    if (std::abs(m + 1) <= nm) {
      cmn += Complex(0, 1) * shifted_derivative(g, circ(m + 1, 2), m + 1, -1);
      cz += Complex(0, -0.5) * shifted_derivative(g, circ(m + 1, 0), m + 1, -1);
    }
    cp -= k * circ(m, 0);
    cmn += k * circ(m, 1);
    out.h(0, m) = (0.5 * (cp + cmn)).transpose();
    out.h(1, m) = (Complex(0, -0.5) * (cp - cmn)).transpose();
    out.h(2, m) = cz.transpose();
  }
  return out;
}

ModeField divergence_k_field(const ModeField& f, Real k) {
  if (f.components != 3)
    throw std::invalid_argument("divergence_k_field: 3 components expected");
  const GridPtr& g = f.grid;
  const int nm = g->n_max;
  ModeField out(g, 1);
  auto circ = [&](int n, int c) -> VectorXc {
    const VectorXc a1 = f.h(0, n).transpose();
    const VectorXc a2 = f.h(1, n).transpose();
    if (c == 0) return a1 + Complex(0, 1) * a2;
    return a1 - Complex(0, 1) * a2;
  };
  for (int m = -nm; m <= nm; ++m) {
    VectorXc div = VectorXc::Zero(g->n_r);
    // div = (d- f+ + d+ f-)/2 + i k f3
    if (std::abs(m + 1) <= nm) div += 0.5 * shifted_derivative(g, circ(m + 1, 0), m + 1, -1);
    if (std::abs(m - 1) <= nm) div += 0.5 * shifted_derivative(g, circ(m - 1, 1), m - 1, +1);
    div += Complex(0, k) * f.h(2, m).transpose();
    out.h(0, m) = div.transpose();
  }
  return out;
}

Real curl_consistency_residual(const ModeField& w, Real k) {
  const GridPtr& g = w.grid;
  const int nm = g->n_max;
  Mode3DSolution sol = solve_mode3d(w, k);
  const ArrayXr inv_r = 1.0 / g->r;

  Real num2 = 0, den2 = 0;
  for (int n = -nm; n <= nm; ++n) {
    // (curl u)+ at mode n: -i (u3' - (n-1) u3/r)|_{n-1} - k u+|_n
    const VectorXc u3m = sol.mode_row(sol.uz, n - 1);
    const VectorXc du3m = sol.du_mode(w, 2, n - 1);
    VectorXc cp = Complex(0, -1) *
                  (du3m.array() - static_cast<Real>(n - 1) * inv_r.cast<Complex>() * u3m.array())
                      .matrix();
    if (k > 0) cp -= k * sol.mode_row(sol.up, n);

    const VectorXc u3p = sol.mode_row(sol.uz, n + 1);
    const VectorXc du3p = sol.du_mode(w, 2, n + 1);
    VectorXc cm = Complex(0, 1) *
                  (du3p.array() + static_cast<Real>(n + 1) * inv_r.cast<Complex>() * u3p.array())
                      .matrix();
    if (k > 0) cm += k * sol.mode_row(sol.um, n);

    const VectorXc upv = sol.mode_row(sol.up, n + 1);
    const VectorXc dup = sol.du_mode(w, 0, n + 1);
    const VectorXc umv = sol.mode_row(sol.um, n - 1);
    const VectorXc dum = sol.du_mode(w, 1, n - 1);
    VectorXc cz =
        Complex(0, -0.5) *
            (dup.array() + static_cast<Real>(n + 1) * inv_r.cast<Complex>() * upv.array())
                .matrix() +
        Complex(0, 0.5) *
            (dum.array() - static_cast<Real>(n - 1) * inv_r.cast<Complex>() * umv.array())
                .matrix();

    const VectorXc wp = sol.source(w, 0, n), wm = sol.source(w, 1, n),
                   wz = sol.source(w, 2, n);
    for (int i = 0; i < g->n_r; ++i) {
      const Real wt = g->w_rdr[i];
      num2 += wt * (std::norm(cp[i] - wp[i]) + std::norm(cm[i] - wm[i]) +
                    std::norm(cz[i] - wz[i]));
      den2 += wt * (std::norm(wp[i]) + std::norm(wm[i]) + std::norm(wz[i]));
    }
  }
  return std::sqrt(num2 / den2);
}

Real divergence_residual(const ModeField& w, Real k) {
  const GridPtr& g = w.grid;
  Mode3DSolution sol = solve_mode3d(w, k);
  const ArrayXr inv_r = 1.0 / g->r;

  Real num2 = 0, den2 = 0;
  for (int n = -sol.n_ext; n <= sol.n_ext; ++n) {
    // div at mode n = (d- u+|_{n+1} + d+ u-|_{n-1}) / 2 + i k u3|_n
    VectorXc div = VectorXc::Zero(g->n_r);
    if (std::abs(n + 1) <= sol.n_ext) {
      const VectorXc upv = sol.mode_row(sol.up, n + 1);
      const VectorXc dup = sol.du_mode(w, 0, n + 1);
      div += 0.5 * (dup.array() +
                    static_cast<Real>(n + 1) * inv_r.cast<Complex>() * upv.array())
                       .matrix();
    }
    if (std::abs(n - 1) <= sol.n_ext) {
      const VectorXc umv = sol.mode_row(sol.um, n - 1);
      const VectorXc dum = sol.du_mode(w, 1, n - 1);
      div += 0.5 * (dum.array() -
                    static_cast<Real>(n - 1) * inv_r.cast<Complex>() * umv.array())
                       .matrix();
    }
    div += Complex(0, k) * sol.mode_row(sol.uz, n);
    for (int i = 0; i < g->n_r; ++i) {
      num2 += g->w_rdr[i] * std::norm(div[i]);
      den2 += g->w_rdr[i] *
              (std::norm(sol.mode_row(sol.up, n)[i]) + std::norm(sol.mode_row(sol.um, n)[i]) +
               std::norm(sol.mode_row(sol.uz, n)[i]));
    }
  }
  return std::sqrt(num2) / std::max(std::sqrt(den2), 1e-300);
}

}  // namespace bspec
