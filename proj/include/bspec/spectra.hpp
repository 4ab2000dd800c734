#pragma once

#include <vector>

#include "bspec/propagate.hpp"

namespace bspec {

enum class ModeClass { Resolved, EssentialArtifact, Unconverged };
enum class Subspace { All, MeanZero, DivergenceFree };

/// One eigenpair of a block operator. Eigenvectors are kept in block modal
/// coordinates; fields are reconstructed on demand.
struct EigenMode {
  Complex lambda;
  int block_M = 0;
  ModeClass cls = ModeClass::Unconverged;
  Real residual = 0;      // || A v - lambda v || / || v ||
  Real tail = 0;          // Gaussian-tail statistic of the eigenfield
  Real refine_shift = 0;  // eigenvalue change under 1.5x radial refinement
  VectorXc coords;        // block coordinates (empty without vectors)
};

struct SpectrumReport {
  GridPtr grid;
  OpKind kind = OpKind::FokkerPlanck;
  int components = 1;
  Real alpha = 0, k = 0;
  bool has_vectors = false;
  bool classified = false;
  WeightSpec class_weight;              // m used by the classification
  std::vector<EigenMode> modes;         // sorted by Re(lambda) descending

  /// Reconstruct the eigenfield of mode idx (requires vectors).
  ModeField eigenfield(int idx) const;
};

/// Dense eigensolve of all blocks. With want_vectors the classification is
/// filled immediately (Gaussian-tail + refinement against m = 4).
SpectrumReport compute_spectrum(const OperatorMatrix& A, bool want_vectors);

/// (Re)classify against the essential threshold of L^2(m): an eigenvalue with
/// Re above -(m/2+1) counts as resolved only if its eigenfield passes the
/// Gaussian-tail test and the eigenvalue is stable under radial refinement.
void classify_modes(SpectrumReport& report, const WeightSpec& m);

/// Max real part over resolved modes whose eigenfields lie in the requested
/// subspace. Throws when no resolved mode qualifies.
Real spectral_gap(const SpectrumReport& report, Subspace subspace);

/// Worst-case amplification of the stretched-mode propagator in the L^2(m)
/// norm. For k0 > 0 the initial data are restricted to the divergence-free
/// subspace at k0 (the constraint transported by the wavenumber flow).
struct GrowthCurve {
  ArrayXr times;
  ArrayXr G;
  ArrayXr k_traj;
  Real alpha = 0, k0 = 0;
  WeightSpec m;
};

GrowthCurve transient_growth(GridPtr grid, Real alpha, Real k0, const WeightSpec& m,
                             const ArrayXr& times, Real dt = 0, int threads = 1);

/// Assemble the operator named by a report's metadata (used by the
/// refinement test and by file round trips).
OperatorMatrix assemble_by_kind(GridPtr grid, OpKind kind, Real alpha, Real k);

}  // namespace bspec
