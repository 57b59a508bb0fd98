#include "unmatched/linear_map.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "unmatched/errors.hpp"

namespace unmatched {

LinearMap::LinearMap(Index rows, Index cols, Action action)
    : rows_(rows), cols_(cols), action_(std::make_shared<const Action>(std::move(action))) {
  if (rows < 0 || cols < 0) {
    throw ShapeError("LinearMap: negative dimension " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Vector LinearMap::apply(const Vector& x) const {
  if (x.size() != cols_) {
    throw ShapeError("LinearMap::apply: expected input of length " + std::to_string(cols_) +
                     ", got " + std::to_string(x.size()));
  }
  Vector y(rows_);
  (*action_)(x, y);
  return y;
}

LinearMap make_dense_map(Matrix matrix) {
  auto m = std::make_shared<const Matrix>(std::move(matrix));
  return LinearMap(m->rows(), m->cols(), [m](const Vector& x, Vector& y) { y.noalias() = *m * x; });
}

LinearMap make_sparse_map(SparseMatrix matrix) {
  matrix.makeCompressed();
  auto m = std::make_shared<const SparseMatrix>(std::move(matrix));
  return LinearMap(m->rows(), m->cols(), [m](const Vector& x, Vector& y) { y.noalias() = *m * x; });
}

LinearMap make_identity_map(Index n) {
  return LinearMap(n, n, [](const Vector& x, Vector& y) { y = x; });
}

Matrix densify(const LinearMap& map) {
  Matrix out(map.rows(), map.cols());
  Vector e = Vector::Zero(map.cols());
  for (Index j = 0; j < map.cols(); ++j) {
    e[j] = 1.0;
    out.col(j) = map.apply(e);
    e[j] = 0.0;
  }
  return out;
}

namespace {

LinearMap counting(const LinearMap& inner, std::shared_ptr<std::atomic<std::uint64_t>> counter) {
  return LinearMap(inner.rows(), inner.cols(),
                   [inner, counter = std::move(counter)](const Vector& x, Vector& y) {
                     y = inner.apply(x);
                     counter->fetch_add(1, std::memory_order_relaxed);
                   });
}

}  // namespace

UnmatchedPair::UnmatchedPair(const LinearMap& forward, const LinearMap& back)
    : counter_(std::make_shared<std::atomic<std::uint64_t>>(0)),
      forward_(counting(forward, counter_)),
      back_(counting(back, counter_)) {
  if (forward.rows() != back.cols() || forward.cols() != back.rows()) {
    throw ShapeError("UnmatchedPair: forward is " + std::to_string(forward.rows()) + "x" +
                     std::to_string(forward.cols()) + " but back is " +
                     std::to_string(back.rows()) + "x" + std::to_string(back.cols()) +
                     "; expected back to be " + std::to_string(forward.cols()) + "x" +
                     std::to_string(forward.rows()));
  }
}

LinearMap compose_ba(const UnmatchedPair& pair) {
  const LinearMap a = pair.forward();
  const LinearMap b = pair.back();
  return LinearMap(a.cols(), a.cols(), [a, b](const Vector& x, Vector& y) { y = b.apply(a.apply(x)); });
}

UnmatchedPair augment(const UnmatchedPair& pair, double alpha) {
  if (!(alpha >= 0.0)) {
    throw DomainError("augment: alpha must be nonnegative, got " + std::to_string(alpha));
  }
  const LinearMap a = pair.forward();
  const LinearMap b = pair.back();
  const Index m = a.rows();
  const Index n = a.cols();
  const double root = std::sqrt(alpha);

  LinearMap forward(m + n, n, [a, m, n, root](const Vector& x, Vector& y) {
    y.head(m) = a.apply(x);
    y.tail(n) = root * x;
  });
  LinearMap back(n, m + n, [b, m, n, root](const Vector& r, Vector& y) {
    y = b.apply(r.head(m));
    y += root * r.tail(n);
  });
  return UnmatchedPair(forward, back);
}

Vector augment_rhs(const Vector& b, Index n) {
  Vector out = Vector::Zero(b.size() + n);
  out.head(b.size()) = b;
  return out;
}

UnmatchedPair make_dense_pair(const Matrix& a, const Matrix& b) {
  return UnmatchedPair(make_dense_map(a), make_dense_map(b));
}

}  // namespace unmatched
