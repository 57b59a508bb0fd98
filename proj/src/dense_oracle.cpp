#include "unmatched/dense_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "unmatched/errors.hpp"
#include "unmatched/krylov.hpp"

namespace unmatched {

namespace {

void guard(const Matrix& a, const char* who) {
  if (a.rows() > kDenseGuard || a.cols() > kDenseGuard) {
    throw SizeGuardError(std::string(who) + ": " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " exceeds the dense guard of " +
                         std::to_string(kDenseGuard));
  }
}

Index rank_of(const Vector& sv, double rank_tol) {
  if (sv.size() == 0 || !(sv[0] > 0.0)) return 0;
  Index r = 0;
  while (r < sv.size() && sv[r] > rank_tol * sv[0]) ++r;
  return r;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Rank of a product measured against the norm of its factors, so that a
// numerically zero product has rank 0.
Index rank_against(const Matrix& m, double scale) {
  if (m.size() == 0 || !(scale > 0.0)) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  Index r = 0;
  while (r < sv.size() && sv[r] > kRankTol * scale) ++r;
  return r;
}

double relative_gap(const Vector& a, const Vector& b, double scale) {
  return (a - b).norm() / std::max(scale, std::numeric_limits<double>::min());
}

}  // namespace

SvdFactors svd_factors(const Matrix& a, double rank_tol) {
  guard(a, "svd_factors");
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdFactors f;
  f.rank = rank_of(svd.singularValues(), rank_tol);
  f.singular_values = svd.singularValues().head(f.rank);
  f.u = svd.matrixU().leftCols(f.rank);
  f.v = svd.matrixV().leftCols(f.rank);
  return f;
}

Index numerical_rank(const Matrix& a, double rank_tol) {
  guard(a, "numerical_rank");
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(a);
  return rank_of(svd.singularValues(), rank_tol);
}

double spectral_norm(const Matrix& a) {
  guard(a, "spectral_norm");
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues()[0];
}

Matrix pseudoinverse(const Matrix& a, double rank_tol) {
  if (a.size() == 0) return Matrix::Zero(a.cols(), a.rows());
  const SvdFactors f = svd_factors(a, rank_tol);
  return f.v * f.singular_values.cwiseInverse().asDiagonal() * f.u.transpose();
}

Matrix range_basis(const Matrix& a, double rank_tol) {
  if (a.size() == 0) return Matrix(a.rows(), 0);
  return svd_factors(a, rank_tol).u;
}

Matrix null_basis(const Matrix& a, double rank_tol) {
  guard(a, "null_basis");
  const Index n = a.cols();
  if (a.rows() == 0) return Matrix::Identity(n, n);
  if (n == 0) return Matrix(0, 0);
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const Index r = rank_of(svd.singularValues(), rank_tol);
  return svd.matrixV().rightCols(n - r);
}

Index intersection_dim(const Matrix& q1, const Matrix& q2) {
  if (q1.cols() == 0 || q2.cols() == 0) return 0;
  return q1.cols() + q2.cols() - numerical_rank(hcat(q1, q2));
}

SubspacePair make_subspace_pair(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw ShapeError("make_subspace_pair: ambient dimensions differ");
  SubspacePair s;
  s.x_basis = range_basis(x);
  s.y_basis = range_basis(y);
  s.y0_basis = s.y_basis.cols() == 0 ? Matrix(Matrix::Identity(y.rows(), y.rows()))
                                     : null_basis(s.y_basis.transpose());
  return s;
}

Matrix oblique_projector(const SubspacePair& sub) {
  const Index m = sub.x_basis.rows();
  const Index dx = sub.x_basis.cols();
  const Index dy = sub.y_basis.cols();
  if (dx + dy != m || intersection_dim(sub.x_basis, sub.y_basis) != 0) {
    throw RankError("oblique_projector: subspaces of dimension " + std::to_string(dx) + " and " +
                    std::to_string(dy) + " are not complementary in R^" + std::to_string(m));
  }
  if (dx == 0) return Matrix::Zero(m, m);
  return sub.x_basis * pseudoinverse(sub.y0_basis.transpose() * sub.x_basis) *
         sub.y0_basis.transpose();
}

Matrix oblique_pseudoinverse(const Matrix& x, const SubspacePair& along, AlongSide side) {
  guard(x, "oblique_pseudoinverse");
  if (side == AlongSide::codomain) {
    const Matrix& y0 = along.y0_basis;
    if (y0.rows() != x.rows()) throw ShapeError("oblique_pseudoinverse: Y0 has wrong ambient size");
    const Matrix m = y0.transpose() * x;
    if (rank_against(m, spectral_norm(x)) != y0.cols()) {
      throw RankError("oblique_pseudoinverse: R(X) and Y do not span the codomain");
    }
    return pseudoinverse(m) * y0.transpose();
  }
  const Matrix& y = along.y_basis;
  if (y.rows() != x.cols()) throw ShapeError("oblique_pseudoinverse: Y has wrong ambient size");
  const Matrix m = x * y;
  if (rank_against(m, spectral_norm(x)) != y.cols()) {
    throw RankError("oblique_pseudoinverse: Y intersects N(X) nontrivially");
  }
  return y * pseudoinverse(m);
}

FixedPointConditions check_unique_fixed_point(const Matrix& a, const Matrix& b) {
  guard(a, "check_unique_fixed_point");
  if (b.rows() != a.cols() || b.cols() != a.rows()) {
    throw ShapeError("check_unique_fixed_point: B must be " + std::to_string(a.cols()) + "x" +
                     std::to_string(a.rows()));
  }
  const Matrix ba = b * a;
  const Matrix ab = a * b;
  const Matrix bab = b * ab;
  const double na = spectral_norm(a);
  const double nb = spectral_norm(b);

  // A product of factors with norm product p carries rounding errors of about
  // eps * p, so singular values are cut there rather than at a fixed ratio.
  // Otherwise products of ill-conditioned factors lose rank spuriously.
  const double unit = 10.0 * static_cast<double>(std::max(a.rows(), a.cols())) *
                      std::numeric_limits<double>::epsilon();
  auto tol = [&](const Matrix& m, double factor_norms) {
    const double s1 = spectral_norm(m);
    return s1 > 0.0 ? unit * factor_norms / s1 : kRankTol;
  };
  auto rank = [&](const Matrix& m, double p) { return numerical_rank(m, tol(m, p)); };
  auto range = [&](const Matrix& m, double p) { return range_basis(m, tol(m, p)); };
  auto null = [&](const Matrix& m, double p) { return null_basis(m, tol(m, p)); };

  const Matrix qb = range(b, nb);
  const Index rb = qb.cols();
  const Matrix qab = range(ab, na * nb);
  const Index rab = qab.cols();
  const Matrix baqb = ba * qb;
  const Index rank_baqb = rank(baqb, na * nb);

  FixedPointConditions c;
  auto& h = c.holds;

  h[0] = rank_baqb == rb;

  {
    // Solve BA Q_B z = B r for a few fixed right-hand sides.
    bool solvable = true;
    if (rb > 0) {
      const Matrix pinv = pseudoinverse(baqb, tol(baqb, na * nb));
      for (int t = 0; t < 3; ++t) {
        const Vector r = random_start(a.rows(), 1000 + t);
        const Vector rhs = b * r;
        const Vector z = pinv * rhs;
        if ((baqb * z - rhs).norm() > 1e-8 * std::max(rhs.norm(), 1e-300)) solvable = false;
      }
    }
    h[1] = solvable && rank_baqb == rb;
  }

  const Matrix null_ba = null(ba, na * nb);
  h[2] = intersection_dim(qb, null_ba) == 0;

  const Matrix null_b = null(b, nb);
  {
    const Matrix null_bab = null(bab, na * nb * nb);
    h[3] = null_bab.cols() == null_b.cols() && intersection_dim(null_bab, null_b) == null_b.cols();
  }

  const Matrix qbab = range(bab, na * nb * nb);
  h[4] = qbab.cols() == rb && intersection_dim(qbab, qb) == rb;
  h[5] = rank(bab, na * nb * nb) == rb;
  h[6] = rank(a * qb, na) == rb && (rab == 0 || rank(b * qab, nb) == rab);
  h[7] = intersection_dim(qb, null(a, na)) == 0 && intersection_dim(qab, null_b) == 0;

  const auto trues = std::count(h.begin(), h.end(), true);
  c.agree = trues == 0 || trues == static_cast<long>(h.size());
  c.consensus = trues == static_cast<long>(h.size());
  if (!c.agree) {
    const bool majority = 2 * trues > static_cast<long>(h.size());
    c.diagnostic = "conditions disagree; dissenting:";
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h[i] != majority) c.diagnostic += " (" + std::to_string(i + 1) + ")";
    }
  }
  return c;
}

Matrix range_projector_along_ba_null(const Matrix& a, const Matrix& b) {
  const Matrix ba = b * a;
  SubspacePair sub;
  sub.x_basis = range_basis(b);
  sub.y_basis = null_basis(ba);
  sub.y0_basis = range_basis(ba.transpose());
  return oblique_projector(sub);
}

Matrix oblique_pseudoinverse_along_null_b(const Matrix& a, const Matrix& b) {
  SubspacePair along;
  along.y0_basis = range_basis(b.transpose());
  return oblique_pseudoinverse(a, along, AlongSide::codomain);
}

FixedPointRoutes fixed_point_ba(const Matrix& a, const Matrix& b, const Vector& rhs) {
  if (rhs.size() != a.rows()) throw ShapeError("fixed_point_ba: rhs length mismatch");
  const FixedPointConditions c = check_unique_fixed_point(a, b);
  if (!c.consensus) {
    throw RankError("fixed_point_ba: no unique fixed point in R(B)" +
                    (c.diagnostic.empty() ? std::string() : "; " + c.diagnostic));
  }

  FixedPointRoutes out;
  {
    SubspacePair onto;
    onto.y_basis = range_basis(b);
    out.routes[0] = oblique_pseudoinverse(b * a, onto, AlongSide::domain) * (b * rhs);
  }
  {
    SubspacePair along;
    along.y0_basis = range_basis(b.transpose());
    out.routes[1] = b * (oblique_pseudoinverse(a * b, along, AlongSide::codomain) * rhs);
  }
  out.routes[2] =
      range_projector_along_ba_null(a, b) * (oblique_pseudoinverse_along_null_b(a, b) * rhs);

  out.x = out.routes[0];
  const double scale = out.x.norm();
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      out.max_discrepancy =
          std::max(out.max_discrepancy, relative_gap(out.routes[i], out.routes[j], scale));
    }
  }
  return out;
}

Vector fixed_point_noise_free_projection(const Matrix& a, const Matrix& b, const Vector& xbar) {
  if (xbar.size() != a.cols()) throw ShapeError("fixed_point_noise_free_projection: xbar length");
  if (!check_unique_fixed_point(a, b).consensus) {
    throw RankError("fixed_point_noise_free_projection: no unique fixed point in R(B)");
  }
  const Matrix ba = b * a;
  SubspacePair sub;
  sub.x_basis = range_basis(ba);
  sub.y_basis = null_basis(ba);
  sub.y0_basis = range_basis(ba.transpose());
  return oblique_projector(sub) * xbar;
}

ShiftedFixedPoint fixed_point_shifted(const Matrix& a, const Matrix& b, const Vector& rhs,
                                      double alpha) {
  guard(a, "fixed_point_shifted");
  if (b.rows() != a.cols() || b.cols() != a.rows() || rhs.size() != a.rows()) {
    throw ShapeError("fixed_point_shifted: shape mismatch");
  }
  if (!(alpha > 0.0)) throw DomainError("fixed_point_shifted: alpha must be positive");
  const Index m = a.rows();
  const Index n = a.cols();

  Eigen::ColPivHouseholderQR<Matrix> qr_ba(b * a + alpha * Matrix::Identity(n, n));
  if (!qr_ba.isInvertible()) throw SolveError("fixed_point_shifted: BA + alpha I is singular");
  Eigen::ColPivHouseholderQR<Matrix> qr_ab(a * b + alpha * Matrix::Identity(m, m));
  if (!qr_ab.isInvertible()) throw SolveError("fixed_point_shifted: AB + alpha I is singular");

  ShiftedFixedPoint out;
  out.x = qr_ba.solve(b * rhs);
  out.via_ab = b * qr_ab.solve(rhs);
  const double scale = out.x.norm();
  out.discrepancy = relative_gap(out.x, out.via_ab, scale);
  const Matrix qb = range_basis(b);
  out.range_defect = relative_gap(out.x, qb * (qb.transpose() * out.x), scale);
  return out;
}

Vector tikhonov_solution(const Matrix& a, const Vector& rhs, double alpha) {
  guard(a, "tikhonov_solution");
  if (rhs.size() != a.rows()) throw ShapeError("tikhonov_solution: rhs length mismatch");
  if (!(alpha >= 0.0)) throw DomainError("tikhonov_solution: alpha must be nonnegative");
  const Index m = a.rows();
  const Index n = a.cols();
  Matrix stacked(m + n, n);
  stacked << a, std::sqrt(alpha) * Matrix::Identity(n, n);
  return stacked.colPivHouseholderQr().solve(augment_rhs(rhs, n));
}

BoundReport perturbation_bound_ba(const Matrix& a, const Matrix& b, const Vector& bbar,
                                  const Vector& e) {
  if (bbar.size() != a.rows() || e.size() != a.rows()) {
    throw ShapeError("perturbation_bound_ba: data length mismatch");
  }
  const Matrix p = range_projector_along_ba_null(a, b);
  const Matrix apinv = oblique_pseudoinverse_along_null_b(a, b);
  const double pinv_norm = spectral_norm(apinv);

  BoundReport r;
  r.noise_term = spectral_norm(p) * pinv_norm * e.norm();
  r.absolute_bound = r.noise_term;
  if (a.rows() >= a.cols() && numerical_rank(a) == a.cols() && numerical_rank(b) == a.cols()) {
    r.projector_free_bound = pinv_norm * e.norm();
  }

  const Vector clean = fixed_point_ba(a, b, bbar).x;
  const Vector noisy = fixed_point_ba(a, b, bbar + e).x;
  r.measured_error = (noisy - clean).norm();
  const double scale = std::max(clean.norm(), std::numeric_limits<double>::min());
  r.measured_relative = r.measured_error / scale;
  r.relative_bound = r.absolute_bound / scale;
  return r;
}

BoundReport perturbation_bound_shifted(const Matrix& a, const PerturbationSpec& spec,
                                       const Vector& bbar) {
  guard(a, "perturbation_bound_shifted");
  const Index m = a.rows();
  const Index n = a.cols();
  if (spec.e_a.rows() != m || spec.e_a.cols() != n || spec.e_at.rows() != n ||
      spec.e_at.cols() != m || spec.e.size() != m || bbar.size() != m) {
    throw ShapeError("perturbation_bound_shifted: perturbation shapes do not match A");
  }
  const double alpha = spec.alpha;
  if (!(alpha > 0.0)) throw DomainError("perturbation_bound_shifted: alpha must be positive");

  const Vector x_alpha = tikhonov_solution(a, bbar, alpha);
  const Vector ax = a * x_alpha;
  const Vector misfit = bbar - ax;
  const double half_inv_root = 1.0 / (2.0 * std::sqrt(alpha));
  const double norm_a = spectral_norm(a);

  BoundReport r;
  r.noise_term = half_inv_root * spec.e.norm();
  r.e_a_term = half_inv_root * (spec.e_a * x_alpha).norm();
  r.e_at_term = (spec.e_at * misfit).norm() / alpha;
  r.absolute_bound = r.noise_term + r.e_a_term + r.e_at_term;

  const double ax_norm = std::max(ax.norm(), std::numeric_limits<double>::min());
  r.relative_bound = norm_a * half_inv_root * spec.e.norm() / ax_norm +
                     half_inv_root * spectral_norm(spec.e_a) +
                     norm_a * spectral_norm(spec.e_at) / alpha * misfit.norm() / ax_norm;

  const Matrix back = a.transpose() + spec.e_at;
  const Matrix lhs = back * (a + spec.e_a) + alpha * Matrix::Identity(n, n);
  Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
  if (!qr.isInvertible()) throw SolveError("perturbation_bound_shifted: shifted system is singular");
  const Vector x_tilde = qr.solve(back * (bbar + spec.e));

  r.measured_error = (x_tilde - x_alpha).norm();
  r.measured_relative =
      r.measured_error / std::max(x_alpha.norm(), std::numeric_limits<double>::min());
  return r;
}

double regularization_error_bound(Index n, double nu, double alpha, double norm_a) {
  if (n < 1) throw DomainError("regularization_error_bound: n must be positive");
  if (!(nu >= 0.0)) throw DomainError("regularization_error_bound: nu must be nonnegative");
  if (!(alpha > 0.0)) throw DomainError("regularization_error_bound: alpha must be positive");
  if (!(norm_a > 0.0)) throw DomainError("regularization_error_bound: ||A|| must be positive");
  const double root_n = std::sqrt(static_cast<double>(n));
  const double ratio = std::sqrt(alpha) / norm_a;
  if (nu < 1.0) return root_n;
  if (nu < 3.0) return root_n * std::pow(ratio, nu - 1.0);
  return root_n * ratio * ratio;
}

}  // namespace unmatched
