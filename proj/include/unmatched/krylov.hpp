#pragma once

// Matrix-free estimation of the leftmost eigenvalue of BA.
//
// Krylov decompositions  BA V = V H + h v f^T  are expanded by Arnoldi steps
// and restarted by keeping the invariant subspace of H that belongs to its
// leftmost eigenvalues (Krylov-Schur). The field-of-values variant runs a
// fixed number of restart cycles and reports min Re W(H) instead of a Ritz
// value.

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "unmatched/linear_map.hpp"

namespace unmatched {

/// op V = V H + coupling * next * coupling_vector^T.
///
/// V, H and f stay real: restarts keep a conjugation-closed set of Schur
/// vectors and store a real orthonormal basis of their span.
struct KrylovDecomposition {
  Matrix basis;            // V, n x l, orthonormal columns
  Matrix projected;        // H, l x l
  double coupling = 0.0;   // h_{l+1,l}
  Vector next;             // v_{l+1}, unit, orthogonal to V
  Vector coupling_vector;  // f, length l
  /// Expansion stopped on a (numerically) invariant subspace; coupling is 0.
  bool invariant = false;

  Index dim() const { return basis.cols(); }
};

/// Empty decomposition whose next Arnoldi vector is v1 / ||v1||.
KrylovDecomposition start_decomposition(const Vector& v1);

/// Arnoldi expansion with two-pass full reorthogonalization until
/// dim() == target_dim, or earlier on breakdown (new vector norm below
/// 1e-14 ||H||). A fresh expansion leaves coupling_vector = e_l.
KrylovDecomposition arnoldi_expand(const LinearMap& op, KrylovDecomposition decomp,
                                   Index target_dim);

/// ||op V e_j - V H e_j - coupling * next * f_j||, the defect of one column of
/// the decomposition identity. Costs one application of op.
double decomposition_defect(const LinearMap& op, const KrylovDecomposition& decomp, Index column);

/// H = Q T Q^H with T upper triangular and its diagonal sorted leftmost first.
struct SortedSchur {
  ComplexMatrix q;
  ComplexMatrix t;
};

/// Leftmost ordering: nondecreasing real part; ties broken by smaller |Im|,
/// then nonnegative Im. Values within tie_tol count as equal.
bool leftmost_before(std::complex<double> a, std::complex<double> b, double tie_tol);

SortedSchur sorted_schur(const Matrix& h);

/// Restricts the decomposition to the invariant subspace of H spanned by the
/// first `keep` sorted Schur vectors, widened by one when `keep` splits a
/// complex-conjugate pair.
KrylovDecomposition truncate_leftmost(const KrylovDecomposition& decomp, const SortedSchur& schur,
                                      Index keep);

struct EstimatorConfig {
  Index mindim = 30;
  Index maxdim = 60;
  double tol = 1e-2;  // absolute
  int max_cycles = 50;
  std::uint64_t seed = 1;
};

enum class EstimateMethod { krylov_schur, fov, dense_oracle };

std::string to_string(EstimateMethod m);

struct EigEstimate {
  std::complex<double> theta;
  /// V c_1 for Krylov-Schur, an eigenvector for the dense oracle.
  ComplexVector vector;
  /// |h f^T c_1|, which equals ||(BA - theta I) V c_1||.
  double residual = 0.0;
  std::uint64_t mvms = 0;
  bool converged = false;
  EstimateMethod method = EstimateMethod::krylov_schur;
  std::uint64_t seed = 0;
  int cycles = 0;
  /// Ritz values of the first full projected matrix and of the final one.
  /// Their outer part approximates the outer spectrum of BA and feeds the
  /// step-size bound.
  std::vector<std::complex<double>> ritz_values;
};

/// Seeded standard-normal starting vector.
Vector random_start(Index n, std::uint64_t seed);

/// Krylov-Schur for the eigenvalue of BA with smallest real part. On
/// reaching max_cycles the best estimate so far is returned with
/// converged = false.
EigEstimate krylov_schur_leftmost(const UnmatchedPair& pair, const EstimatorConfig& cfg);

struct FovEstimate {
  double value = 0.0;  // min Re W(H)
  std::uint64_t mvms = 0;
  std::uint64_t seed = 0;
  int expansions = 0;
  std::vector<std::complex<double>> ritz_values;
};

/// maxit expansion phases to maxdim (the initial build plus maxit - 1
/// restarts), then lambda_min((H + H^T) / 2).
FovEstimate fov_leftmost(const UnmatchedPair& pair, const EstimatorConfig& cfg, int maxit);

/// min Re W(M) = lambda_min((M + M^T) / 2).
double numerical_abscissa_left(const Matrix& m);

/// 0 if Re(lambda_lm) > 0, otherwise factor * |Re(lambda_lm)|.
double select_shift(double leftmost_real, double factor = 2.0);
double select_shift(const EigEstimate& estimate, double factor = 2.0);

/// Largest matrix dimension the dense eigen-oracle accepts.
inline constexpr Index kDenseGuard = 2000;

std::vector<std::complex<double>> dense_eigenvalues(const Matrix& m);

/// Full eigendecomposition; returns the leftmost eigenvalue under
/// leftmost_before. Throws SizeGuardError above kDenseGuard.
EigEstimate dense_leftmost(const Matrix& m);

}  // namespace unmatched
