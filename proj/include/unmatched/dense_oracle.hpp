#pragma once

// Dense ground truth for desk-scale problems: SVD utilities, oblique
// projectors and pseudoinverses, the unique-fixed-point conditions, closed
// forms of the iteration limits, and perturbation/regularization bounds.
//
// Everything here refuses matrices with a dimension above kDenseGuard.

#include <array>
#include <optional>
#include <string>

#include "unmatched/linear_map.hpp"

namespace unmatched {

/// Singular values above this fraction of sigma_1 count toward the rank.
inline constexpr double kRankTol = 1e-10;

struct SvdFactors {
  Matrix u;                // m x r
  Vector singular_values;  // r, nonincreasing
  Matrix v;                // n x r
  Index rank = 0;
};

SvdFactors svd_factors(const Matrix& a, double rank_tol = kRankTol);
Index numerical_rank(const Matrix& a, double rank_tol = kRankTol);
double spectral_norm(const Matrix& a);
/// Moore-Penrose pseudoinverse with the shared rank threshold.
Matrix pseudoinverse(const Matrix& a, double rank_tol = kRankTol);
/// Orthonormal basis of R(a).
Matrix range_basis(const Matrix& a, double rank_tol = kRankTol);
/// Orthonormal basis of N(a).
Matrix null_basis(const Matrix& a, double rank_tol = kRankTol);
/// dim(R(q1) ∩ R(q2)) for matrices with orthonormal columns.
Index intersection_dim(const Matrix& q1, const Matrix& q2);

/// Two subspaces X, Y of R^m with orthonormal bases of X, Y and Y^perp.
struct SubspacePair {
  Matrix x_basis;
  Matrix y_basis;
  Matrix y0_basis;
};

/// Orthonormalizes the spans of x and y and computes Y^perp.
SubspacePair make_subspace_pair(const Matrix& x, const Matrix& y);

/// P_{X,Y} = X (Y0^T X)^+ Y0^T. Throws RankError unless X and Y are
/// complementary.
Matrix oblique_projector(const SubspacePair& sub);

/// Which side of X the subspace Y lives on.
enum class AlongSide {
  /// Y ⊂ R^m must satisfy R(X) + Y = R^m; returns (Y0^T X)^+ Y0^T.
  codomain,
  /// Y ⊂ R^n must satisfy Y ∩ N(X) = {0}; returns Y (X Y)^+.
  domain,
};

/// Oblique pseudoinverse of X along Y. `along.y_basis` / `along.y0_basis`
/// are used according to `side`. Throws RankError when the applicable
/// condition fails.
Matrix oblique_pseudoinverse(const Matrix& x, const SubspacePair& along, AlongSide side);

/// The eight equivalent conditions for a unique fixed point in R(B):
///  0 BA nonsingular on R(B)
///  1 BA x = B b uniquely solvable in R(B) for every b
///  2 R(B) ∩ N(BA) = {0}
///  3 N(BAB) = N(B)
///  4 R(BAB) = R(B)
///  5 rank(BAB) = rank(B)
///  6 A nonsingular on R(B) and B nonsingular on R(AB)
///  7 R(B) ∩ N(A) = {0} and R(AB) ∩ N(B) = {0}
struct FixedPointConditions {
  std::array<bool, 8> holds{};
  bool consensus = false;  // value when all agree
  bool agree = false;
  /// Lists the dissenting conditions when they disagree.
  std::string diagnostic;
};

FixedPointConditions check_unique_fixed_point(const Matrix& a, const Matrix& b);

/// The BA-iteration limit computed three ways:
///   (BA)^+_{R(B)} B b,   B (AB)^+_{N(B)} b,   P_{R(B),N(BA)} A^+_{N(B)} b.
struct FixedPointRoutes {
  Vector x;  // first route
  std::array<Vector, 3> routes;
  /// max pairwise ||route_i - route_j|| / ||route_0||
  double max_discrepancy = 0.0;
};

/// Throws RankError when the fixed-point conditions do not hold.
FixedPointRoutes fixed_point_ba(const Matrix& a, const Matrix& b, const Vector& rhs);

/// P_{R(BA),N(BA)} xbar, the limit for noise-free data A xbar.
Vector fixed_point_noise_free_projection(const Matrix& a, const Matrix& b, const Vector& xbar);

/// P_{R(B),N(BA)}.
Matrix range_projector_along_ba_null(const Matrix& a, const Matrix& b);
/// A^+_{N(B)} = (Y0^T A)^+ Y0^T with Y0 an orthonormal basis of R(B^T).
Matrix oblique_pseudoinverse_along_null_b(const Matrix& a, const Matrix& b);

struct ShiftedFixedPoint {
  Vector x;       // (BA + alpha I)^{-1} B b
  Vector via_ab;  // B (AB + alpha I)^{-1} b
  double discrepancy = 0.0;    // ||x - via_ab|| / ||x||
  double range_defect = 0.0;   // ||(I - P_{R(B)}) x|| / ||x||
};

/// Throws SolveError when BA + alpha I is numerically singular.
ShiftedFixedPoint fixed_point_shifted(const Matrix& a, const Matrix& b, const Vector& rhs,
                                      double alpha);

/// (A^T A + alpha I)^{-1} A^T b, via a least-squares solve of [A; sqrt(alpha) I].
Vector tikhonov_solution(const Matrix& a, const Vector& rhs, double alpha);

struct PerturbationSpec {
  Matrix e_a;   // m x n
  Matrix e_at;  // n x m
  Vector e;     // m
  double alpha = 0.0;
};

struct BoundReport {
  double absolute_bound = 0.0;  // noise_term + e_a_term + e_at_term
  double relative_bound = 0.0;
  double noise_term = 0.0;
  double e_a_term = 0.0;
  double e_at_term = 0.0;
  /// Projector-free variant, when m >= n and A, B have full rank.
  std::optional<double> projector_free_bound;
  double measured_error = 0.0;
  double measured_relative = 0.0;
};

/// Data-noise sensitivity of the BA fixed point:
/// ||P_{R(B),N(BA)}|| ||A^+_{N(B)}|| ||e||, with the measured
/// ||x*(bbar + e) - x*(bbar)||.
BoundReport perturbation_bound_ba(const Matrix& a, const Matrix& b, const Vector& bbar,
                                  const Vector& e);

/// First-order bound on ||x~_alpha - xbar_alpha|| where x~_alpha solves
/// ((A^T + E_At)(A + E_A) + alpha I) x = (A^T + E_At)(bbar + e).
BoundReport perturbation_bound_shifted(const Matrix& a, const PerturbationSpec& spec,
                                       const Vector& bbar);

/// Bound on ||xbar_alpha - xbar|| / ||xbar|| when u_i^T bbar = sigma_i^nu.
double regularization_error_bound(Index n, double nu, double alpha, double norm_a);

}  // namespace unmatched
