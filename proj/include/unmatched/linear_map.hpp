#pragma once

// Matrix-free linear operators and unmatched projector/backprojector pairs.
//
// A LinearMap is the only access a solver ever has to A or B. There is no
// transpose: a backprojector is a separate map supplied by the caller.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace unmatched {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
/// Compressed-row storage; column indices are sorted within each row once
/// the matrix is compressed.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Immutable linear action y = M x with a fixed shape.
///
/// Copies share the underlying action. The action must be pure: applying it
/// twice to the same input gives bit-identical output.
class LinearMap {
 public:
  /// Writes M x into y. y is already sized to rows().
  using Action = std::function<void(const Vector& x, Vector& y)>;

  LinearMap(Index rows, Index cols, Action action);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  /// Throws ShapeError when x.size() != cols().
  Vector apply(const Vector& x) const;

 private:
  Index rows_;
  Index cols_;
  std::shared_ptr<const Action> action_;
};

inline Vector apply(const LinearMap& map, const Vector& x) { return map.apply(x); }

LinearMap make_dense_map(Matrix matrix);
LinearMap make_sparse_map(SparseMatrix matrix);
LinearMap make_identity_map(Index n);

/// Materializes the map column by column (cols() applications).
Matrix densify(const LinearMap& map);

/// Forward map A (m x n) and back map B (n x m) sharing one MVM counter.
///
/// forward() and back() return counting wrappers: every application of
/// either one, by anyone, adds 1 to mvm_count().
class UnmatchedPair {
 public:
  UnmatchedPair(const LinearMap& forward, const LinearMap& back);

  const LinearMap& forward() const { return forward_; }
  const LinearMap& back() const { return back_; }

  /// m, the number of rows of A.
  Index data_size() const { return forward_.rows(); }
  /// n, the number of columns of A.
  Index image_size() const { return forward_.cols(); }

  std::uint64_t mvm_count() const { return counter_->load(std::memory_order_relaxed); }

 private:
  std::shared_ptr<std::atomic<std::uint64_t>> counter_;
  LinearMap forward_;
  LinearMap back_;
};

/// The n x n map x -> B (A x). Costs 2 MVMs per application.
LinearMap compose_ba(const UnmatchedPair& pair);

/// The pair ([A; sqrt(alpha) I], [B, sqrt(alpha) I]) whose composed map is
/// BA + alpha I. Throws DomainError for alpha < 0.
UnmatchedPair augment(const UnmatchedPair& pair, double alpha);

/// b padded with n trailing zeros.
Vector augment_rhs(const Vector& b, Index n);

/// Convenience for dense oracle work on small pairs.
UnmatchedPair make_dense_pair(const Matrix& a, const Matrix& b);

}  // namespace unmatched
