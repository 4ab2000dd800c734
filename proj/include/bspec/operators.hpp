#pragma once

#include <vector>

#include "bspec/biot_savart.hpp"
#include "bspec/grid.hpp"

namespace bspec {

enum class OpKind {
  FokkerPlanck,        // scalar L_h
  Advection,           // scalar/componentwise (U^G, grad) = u^g d_theta
  StretchFeedback,     // 2-comp (omega_h, grad_h) U^G_h
  Feedback3,           // scalar (K2D * omega3, grad_h) g
  LAlphaH,             // 2-comp (L_h - 3/2) - alpha (Advection - StretchFeedback)
  LAlpha3,             // scalar L_h - alpha (Advection + Feedback3)
  Coupling,            // 3-comp H(k)
  StretchedGenerator,  // 3-comp full generator at (alpha, k)
};

/// Rotation-equivariant operators are block-diagonal over the total angular
/// index M once vector fields are written in circular components
/// w+- = w1 +- i w2: the members of block M are (+ at mode M+1),
/// (- at mode M-1), (scalar/vertical at mode M). Each block is a dense
/// complex matrix over the members' modal coefficients.
class OperatorMatrix {
 public:
  struct Member {
    int comp;    // 0: +, 1: -, 2: vertical; scalar operators use comp 0
    int n;       // azimuthal mode of the member's coefficient
    int m;       // modal dimension (grid family |n|)
    int offset;  // column offset inside the block
  };
  struct Block {
    int M = 0;
    std::vector<Member> members;
    MatrixXc A;
    int size = 0;
  };

  GridPtr grid;
  OpKind kind = OpKind::FokkerPlanck;
  int components = 1;
  Real alpha = 0;
  Real k = 0;
  bool hermitian = false;
  std::vector<Block> blocks;

  int total_dim() const;
  const Block* block(int M) const;

  /// Apply to an envelope-flattened field (Cartesian components).
  ModeField apply(const ModeField& f) const;

  /// Modal block coordinates of a field, member layout of block `b`.
  VectorXc gather(const ModeField& f, const Block& b) const;
  /// Scatter block coordinates back into a field (adds into place).
  void scatter(const VectorXc& x, const Block& b, ModeField& f) const;

  /// Member weights of the L^2(m) Gram matrix: 1/2 for circular horizontal
  /// members, 1 for scalar/vertical ones.
  static Real member_weight(const Member& mem, int components);
};

/// Two-dimensional Fokker-Planck operator Delta_h + x_h/2 . grad_h + 1 in the
/// flattened basis. Assembled from the quadrature of the sesquilinear form
/// (exactly symmetric); a second assembly path applying the operator to the
/// basis analytically must agree after accounting for the domain-truncation
/// boundary term, else construction fails.
OperatorMatrix assemble_Lh(GridPtr grid);

/// Advection by the vortex velocity: i n u^g(r^2) per mode (skew-adjoint).
OperatorMatrix assemble_advection(GridPtr grid);

/// (omega_h, grad_h) U^G_h: multiplication by the velocity Jacobian, coupling
/// modes n -> n, n+-2 in Cartesian form; block-diagonal in circular form.
OperatorMatrix assemble_stretch_h(GridPtr grid);

/// (K2D * omega3, grad_h) g: stream-function solve composed with the radial
/// Gaussian gradient.
OperatorMatrix assemble_feedback3(GridPtr grid);

/// Horizontal vectorial operator (L_h - 3/2) - alpha (Lambda1 - Lambda2~).
OperatorMatrix assemble_L_alpha_h(GridPtr grid, Real alpha);

/// Vertical scalar operator L_h - alpha (Lambda1 + Lambda3~).
OperatorMatrix assemble_L_alpha_3(GridPtr grid, Real alpha);

/// Coupling operator H at vertical wavenumber k (vanishes identically at
/// k = 0, where vertical derivatives are absent).
OperatorMatrix assemble_H(GridPtr grid, Real k);

/// Full stretched-mode generator G(alpha, k):
///   rows h: (L_h - 3/2 - k^2) - alpha (Lambda1 - Lambda2~) - alpha H_h(k)
///   row  3: (L_h - k^2)       - alpha (Lambda1 + Lambda3~) - alpha H_3(k)
/// The vertical dilation is not part of the matrix; it is realized by the
/// wavenumber flow k(t) = k0 e^{-t} during propagation.
OperatorMatrix assemble_stretched_generator(GridPtr grid, Real alpha, Real k);

/// Dense export of the block-diagonal operator (block order as stored).
MatrixXc dense_matrix(const OperatorMatrix& op);

/// Modal matrix of (d1 + i d2) (dir = +1) or (d1 - i d2) (dir = -1) acting on
/// a coefficient at mode n_src, projected onto the target family |n_src+dir|.
MatrixXr mode_shift_matrix(const SpectralGrid& g, int n_src, int dir);

}  // namespace bspec
