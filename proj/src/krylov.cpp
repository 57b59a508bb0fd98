#include "unmatched/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "unmatched/errors.hpp"

namespace unmatched {

using Complex = std::complex<double>;

std::string to_string(EstimateMethod m) {
  switch (m) {
    case EstimateMethod::krylov_schur: return "ks";
    case EstimateMethod::fov: return "fov";
    case EstimateMethod::dense_oracle: return "dense";
  }
  return "unknown";
}

KrylovDecomposition start_decomposition(const Vector& v1) {
  const double norm = v1.norm();
  if (!(norm > 0.0)) throw DomainError("start_decomposition: zero starting vector");
  KrylovDecomposition d;
  d.basis = Matrix(v1.size(), 0);
  d.projected = Matrix(0, 0);
  d.coupling_vector = Vector(0);
  d.next = v1 / norm;
  d.coupling = 1.0;
  return d;
}

KrylovDecomposition arnoldi_expand(const LinearMap& op, KrylovDecomposition d, Index target_dim) {
  const Index n = op.cols();
  if (op.rows() != n) throw ShapeError("arnoldi_expand: operator must be square");
  if (d.basis.rows() != n) {
    throw ShapeError("arnoldi_expand: basis has " + std::to_string(d.basis.rows()) +
                     " rows, operator needs " + std::to_string(n));
  }
  if (target_dim > n) {
    throw DomainError("arnoldi_expand: target dimension " + std::to_string(target_dim) +
                      " exceeds n = " + std::to_string(n));
  }
  if (d.invariant) return d;

  for (Index j = d.dim(); j < target_dim; ++j) {
    d.basis.conservativeResize(n, j + 1);
    d.basis.col(j) = d.next;

    Matrix h(j + 1, j + 1);
    h.topLeftCorner(j, j) = d.projected;
    if (j > 0) h.row(j).head(j) = d.coupling * d.coupling_vector.transpose();

    Vector w = op.apply(d.basis.col(j));
    Vector coef = d.basis.transpose() * w;
    w.noalias() -= d.basis * coef;
    const Vector again = d.basis.transpose() * w;
    w.noalias() -= d.basis * again;
    coef += again;
    h.col(j) = coef;

    d.projected = std::move(h);
    d.coupling_vector = Vector::Unit(j + 1, j);

    const double beta = w.norm();
    if (beta <= 1e-14 * d.projected.norm()) {
      d.coupling = 0.0;
      d.next = Vector::Zero(n);
      d.invariant = true;
      break;
    }
    d.coupling = beta;
    d.next = w / beta;
  }
  return d;
}

double decomposition_defect(const LinearMap& op, const KrylovDecomposition& d, Index column) {
  if (column < 0 || column >= d.dim()) throw DomainError("decomposition_defect: bad column");
  Vector r = op.apply(d.basis.col(column));
  r.noalias() -= d.basis * d.projected.col(column);
  r -= d.coupling * d.coupling_vector[column] * d.next;
  return r.norm();
}

bool leftmost_before(Complex a, Complex b, double tie_tol) {
  if (std::abs(a.real() - b.real()) > tie_tol) return a.real() < b.real();
  const double ia = std::abs(a.imag());
  const double ib = std::abs(b.imag());
  if (std::abs(ia - ib) > tie_tol) return ia < ib;
  return a.imag() >= 0.0 && b.imag() < 0.0;
}

namespace {

double tie_tolerance(const ComplexVector& values) {
  double scale = 0.0;
  for (Index i = 0; i < values.size(); ++i) scale = std::max(scale, std::abs(values[i]));
  return 1e-12 * scale;
}

// Moves T(k+1,k+1) to position k with a unitary rotation of rows/columns k, k+1.
void swap_adjacent(ComplexMatrix& t, ComplexMatrix& q, Index k) {
  const Complex t11 = t(k, k);
  const Complex t22 = t(k + 1, k + 1);
  Eigen::Vector2cd v(t(k, k + 1), t22 - t11);
  const double nv = v.norm();
  if (nv == 0.0) return;
  v /= nv;
  Eigen::Matrix2cd g;
  g << v[0], -std::conj(v[1]), v[1], std::conj(v[0]);
  t.middleCols(k, 2) = t.middleCols(k, 2) * g;
  t.middleRows(k, 2) = g.adjoint() * t.middleRows(k, 2);
  q.middleCols(k, 2) = q.middleCols(k, 2) * g;
  t(k + 1, k) = 0.0;
  t(k, k) = t22;
  t(k + 1, k + 1) = t11;
}

}  // namespace

SortedSchur sorted_schur(const Matrix& h) {
  const Index l = h.rows();
  SortedSchur s;
  if (l == 0) {
    s.q = ComplexMatrix(0, 0);
    s.t = ComplexMatrix(0, 0);
    return s;
  }
  Eigen::ComplexSchur<ComplexMatrix> schur(h.cast<Complex>());
  if (schur.info() != Eigen::Success) throw SolveError("sorted_schur: Schur iteration failed");
  s.q = schur.matrixU();
  s.t = schur.matrixT();
  s.t.triangularView<Eigen::StrictlyLower>().setZero();

  const double tol = tie_tolerance(s.t.diagonal());
  for (Index i = 0; i < l; ++i) {
    Index best = i;
    for (Index j = i + 1; j < l; ++j) {
      if (leftmost_before(s.t(j, j), s.t(best, best), tol)) best = j;
    }
    for (Index j = best; j > i; --j) swap_adjacent(s.t, s.q, j - 1);
  }
  return s;
}

KrylovDecomposition truncate_leftmost(const KrylovDecomposition& d, const SortedSchur& schur,
                                      Index keep) {
  const Index l = d.dim();
  if (keep < 1 || keep > l) throw DomainError("truncate_leftmost: keep out of range");
  const ComplexMatrix q1 = schur.q.leftCols(keep);
  Matrix parts(l, 2 * keep);
  parts.leftCols(keep) = q1.real();
  parts.rightCols(keep) = q1.imag();
  Eigen::JacobiSVD<Matrix> svd(parts, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > 1e-8 * sv[0]) ++rank;
  const Matrix z = svd.matrixU().leftCols(rank);

  KrylovDecomposition out;
  out.basis = d.basis * z;
  out.projected = z.transpose() * d.projected * z;
  out.coupling_vector = z.transpose() * d.coupling_vector;
  out.coupling = d.coupling;
  out.next = d.next;
  out.invariant = d.invariant;
  return out;
}

Vector random_start(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

namespace {

void check_estimator(const EstimatorConfig& cfg, Index n) {
  if (cfg.mindim < 1 || cfg.mindim >= cfg.maxdim) {
    throw DomainError("estimator: need 1 <= mindim < maxdim, got " + std::to_string(cfg.mindim) +
                      ", " + std::to_string(cfg.maxdim));
  }
  if (cfg.maxdim > n) {
    throw DomainError("estimator: maxdim " + std::to_string(cfg.maxdim) + " exceeds n = " +
                      std::to_string(n));
  }
  if (!(cfg.tol > 0.0)) throw DomainError("estimator: tol must be positive");
  if (cfg.max_cycles < 1) throw DomainError("estimator: max_cycles must be positive");
}

// Truncates to mindim leftmost Schur vectors (keeping conjugate pairs
// together) and expands back to maxdim.
KrylovDecomposition restart(const LinearMap& op, const KrylovDecomposition& d,
                            const SortedSchur& schur, const EstimatorConfig& cfg) {
  KrylovDecomposition kept = truncate_leftmost(d, schur, cfg.mindim);
  if (kept.dim() >= d.dim() && cfg.mindim > 1) {
    kept = truncate_leftmost(d, schur, cfg.mindim - 1);
  }
  return arnoldi_expand(op, std::move(kept), cfg.maxdim);
}

void append_diagonal(std::vector<Complex>& out, const SortedSchur& s) {
  for (Index i = 0; i < s.t.rows(); ++i) out.push_back(s.t(i, i));
}

}  // namespace

EigEstimate krylov_schur_leftmost(const UnmatchedPair& pair, const EstimatorConfig& cfg) {
  const Index n = pair.image_size();
  check_estimator(cfg, n);
  const LinearMap op = compose_ba(pair);
  const std::uint64_t mvm_start = pair.mvm_count();

  KrylovDecomposition d = arnoldi_expand(op, start_decomposition(random_start(n, cfg.seed)), cfg.maxdim);

  EigEstimate est;
  est.method = EstimateMethod::krylov_schur;
  est.seed = cfg.seed;
  double best_residual = std::numeric_limits<double>::infinity();
  SortedSchur schur;

  for (int cycle = 1; cycle <= cfg.max_cycles; ++cycle) {
    schur = sorted_schur(d.projected);
    if (cycle == 1) append_diagonal(est.ritz_values, schur);
    const ComplexVector c1 = schur.q.col(0);
    const double residual = d.invariant ? 0.0 : std::abs(d.coupling * d.coupling_vector.cast<Complex>().cwiseProduct(c1).sum());
    est.cycles = cycle;
    if (residual < best_residual) {
      best_residual = residual;
      est.theta = schur.t(0, 0);
      est.residual = residual;
      est.vector = d.basis.cast<Complex>() * c1;
    }
    if (residual <= cfg.tol) {
      est.converged = true;
      break;
    }
    if (d.invariant || cycle == cfg.max_cycles) break;
    d = restart(op, d, schur, cfg);
  }
  append_diagonal(est.ritz_values, schur);
  est.mvms = pair.mvm_count() - mvm_start;
  return est;
}

FovEstimate fov_leftmost(const UnmatchedPair& pair, const EstimatorConfig& cfg, int maxit) {
  const Index n = pair.image_size();
  check_estimator(cfg, n);
  if (maxit < 1) throw DomainError("fov_leftmost: maxit must be positive");
  const LinearMap op = compose_ba(pair);
  const std::uint64_t mvm_start = pair.mvm_count();

  FovEstimate est;
  est.seed = cfg.seed;
  KrylovDecomposition d = arnoldi_expand(op, start_decomposition(random_start(n, cfg.seed)), cfg.maxdim);
  est.expansions = 1;
  append_diagonal(est.ritz_values, sorted_schur(d.projected));
  for (int k = 1; k < maxit && !d.invariant; ++k) {
    d = restart(op, d, sorted_schur(d.projected), cfg);
    ++est.expansions;
  }
  append_diagonal(est.ritz_values, sorted_schur(d.projected));
  est.value = numerical_abscissa_left(d.projected);
  est.mvms = pair.mvm_count() - mvm_start;
  return est;
}

double numerical_abscissa_left(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("numerical_abscissa_left: matrix must be square");
  if (m.rows() == 0) throw ShapeError("numerical_abscissa_left: empty matrix");
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()[0];
}

double select_shift(double leftmost_real, double factor) {
  if (!(factor >= 1.0)) throw DomainError("select_shift: factor must be >= 1");
  if (leftmost_real > 0.0) return 0.0;
  return factor * std::abs(leftmost_real);
}

double select_shift(const EigEstimate& estimate, double factor) {
  return select_shift(estimate.theta.real(), factor);
}

std::vector<Complex> dense_eigenvalues(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("dense_eigenvalues: matrix must be square");
  if (m.rows() > kDenseGuard) {
    throw SizeGuardError("dense_eigenvalues: n = " + std::to_string(m.rows()) +
                         " exceeds the dense guard; use krylov_schur_leftmost instead");
  }
  Eigen::EigenSolver<Matrix> eig(m, false);
  if (eig.info() != Eigen::Success) throw SolveError("dense_eigenvalues: QR iteration failed");
  const ComplexVector ev = eig.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

EigEstimate dense_leftmost(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("dense_leftmost: matrix must be square");
  if (m.rows() == 0) throw ShapeError("dense_leftmost: empty matrix");
  if (m.rows() > kDenseGuard) {
    throw SizeGuardError("dense_leftmost: n = " + std::to_string(m.rows()) +
                         " exceeds the dense guard; use krylov_schur_leftmost instead");
  }
  Eigen::EigenSolver<Matrix> eig(m, true);
  if (eig.info() != Eigen::Success) throw SolveError("dense_leftmost: QR iteration failed");
  const ComplexVector ev = eig.eigenvalues();
  const double tol = tie_tolerance(ev);
  Index best = 0;
  for (Index i = 1; i < ev.size(); ++i) {
    if (leftmost_before(ev[i], ev[best], tol)) best = i;
  }
  EigEstimate est;
  est.method = EstimateMethod::dense_oracle;
  est.theta = ev[best];
  est.vector = eig.eigenvectors().col(best);
  est.converged = true;
  est.ritz_values.assign(ev.data(), ev.data() + ev.size());
  const ComplexVector r = m.cast<Complex>() * est.vector - est.theta * est.vector;
  est.residual = r.norm();
  return est;
}

}  // namespace unmatched
