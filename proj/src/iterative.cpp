#include "unmatched/iterative.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "unmatched/errors.hpp"

namespace unmatched {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::fixed_point_reached: return "fixed_point_reached";
    case Termination::max_iters: return "max_iters";
    case Termination::diverged: return "diverged";
  }
  return "unknown";
}

namespace {

void check_config(const IterationConfig& config) {
  if (!(config.omega > 0.0)) {
    throw DomainError("omega must be positive, got " + std::to_string(config.omega));
  }
  if (!(config.alpha >= 0.0)) {
    throw DomainError("alpha must be nonnegative, got " + std::to_string(config.alpha));
  }
  if (!(config.fixed_point_tol >= 0.0)) {
    throw DomainError("fixed_point_tol must be nonnegative");
  }
  if (config.record_every == 0) throw DomainError("record_every must be positive");
  if (config.max_iters == 0) throw DomainError("max_iters must be positive");
}

SolveResult run(const UnmatchedPair& pair, const Vector& b, const IterationConfig& config,
                const std::optional<Vector>& reference) {
  check_config(config);
  const Index m = pair.data_size();
  const Index n = pair.image_size();
  if (b.size() != m) {
    throw ShapeError("right-hand side has length " + std::to_string(b.size()) + ", expected " +
                     std::to_string(m));
  }
  if (reference && reference->size() != n) {
    throw ShapeError("reference solution has length " + std::to_string(reference->size()) +
                     ", expected " + std::to_string(n));
  }

  const double omega = config.omega;
  const double alpha = config.alpha;
  const double tol = config.fixed_point_tol;
  const double ref_norm = reference ? reference->norm() : 0.0;
  const std::uint64_t mvm_start = pair.mvm_count();

  SolveResult result;
  result.history.has_reference = reference.has_value();
  result.x = Vector::Zero(n);
  Vector& x = result.x;

  double initial_residual = 0.0;
  double bb_norm = 0.0;  // ||B b||, the first B r with x^0 = 0
  for (std::size_t k = 0; k < config.max_iters; ++k) {
    if (config.observer) config.observer(k, x);

    const Vector r = b - pair.forward().apply(x);
    const double residual_norm = r.norm();
    if (k == 0) initial_residual = residual_norm;

    IterationRecord rec;
    rec.iter = k;
    rec.residual_norm = residual_norm;
    if (reference) {
      rec.error_norm = ref_norm > 0.0 ? (x - *reference).norm() / ref_norm : (x - *reference).norm();
    }

    const bool blown_up = !std::isfinite(residual_norm) ||
                          residual_norm > kDivergenceFactor *
                                              std::max(initial_residual,
                                                       std::numeric_limits<double>::min());
    if (blown_up) {
      rec.update_norm = std::numeric_limits<double>::quiet_NaN();
      rec.mvms = pair.mvm_count() - mvm_start;
      result.history.records.push_back(rec);
      result.termination = Termination::diverged;
      break;
    }

    const Vector g = pair.back().apply(r);
    if (k == 0) bb_norm = g.norm();
    Vector step = omega * g;
    if (alpha != 0.0) step -= (alpha * omega) * x;
    const double update_norm = step.norm();
    const double x_norm = x.norm();

    rec.update_norm = update_norm;
    rec.mvms = pair.mvm_count() - mvm_start;

    x += step;
    result.iterations = k + 1;

    const bool fixed = tol > 0.0 && update_norm <= tol * std::max(x_norm, 1e-300) &&
                       update_norm / omega <= tol * bb_norm;
    const bool last = fixed || k + 1 == config.max_iters;
    if (k < config.record_head || k % config.record_every == 0 || last) result.history.records.push_back(rec);
    if (fixed) {
      result.termination = Termination::fixed_point_reached;
      break;
    }
  }

  if (reference) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rec : result.history.records) {
      if (rec.error_norm && *rec.error_norm < best) {
        best = *rec.error_norm;
        result.best_error_iteration = rec.iter;
      }
    }
  }
  return result;
}

double largest_magnitude(std::span<const std::complex<double>> eigenvalues) {
  double scale = 0.0;
  for (const auto& l : eigenvalues) scale = std::max(scale, std::abs(l));
  return scale;
}

}  // namespace

SolveResult landweber(const LinearMap& a, const LinearMap& a_transpose, const Vector& b,
                      const IterationConfig& config, const std::optional<Vector>& reference) {
  if (config.alpha != 0.0) throw DomainError("landweber: alpha must be 0");
  return run(UnmatchedPair(a, a_transpose), b, config, reference);
}

SolveResult ba_iterate(const UnmatchedPair& pair, const Vector& b, const IterationConfig& config,
                       const std::optional<Vector>& reference) {
  if (config.alpha != 0.0) {
    throw DomainError("ba_iterate: alpha must be 0; use shifted_ba_iterate for alpha > 0");
  }
  return run(pair, b, config, reference);
}

SolveResult shifted_ba_iterate(const UnmatchedPair& pair, const Vector& b,
                               const IterationConfig& config,
                               const std::optional<Vector>& reference) {
  if (!(config.alpha > 0.0)) {
    throw DomainError("shifted_ba_iterate: alpha must be positive, got " +
                      std::to_string(config.alpha));
  }
  return run(pair, b, config, reference);
}

double max_omega_ba(std::span<const std::complex<double>> eigenvalues) {
  return max_omega_shifted(eigenvalues, 0.0);
}

double max_omega_shifted(std::span<const std::complex<double>> eigenvalues, double alpha) {
  if (eigenvalues.empty()) throw DomainError("max_omega: empty eigenvalue list");
  if (!(alpha >= 0.0)) throw DomainError("max_omega: alpha must be nonnegative");
  const double zero_tol = kZeroEigenvalueTol * std::max(largest_magnitude(eigenvalues), alpha);

  double bound = std::numeric_limits<double>::infinity();
  for (const auto& lambda : eigenvalues) {
    // Eigenvalues of BA at -alpha do not affect convergence.
    if (std::abs(lambda + alpha) <= zero_tol) continue;
    const double re = lambda.real() + alpha;
    if (re <= 0.0) {
      throw InfeasibleError("eigenvalue (" + std::to_string(lambda.real()) + ", " +
                                std::to_string(lambda.imag()) + ") has Re(lambda) + alpha = " +
                                std::to_string(re) + " <= 0",
                            lambda);
    }
    const double denom = std::norm(lambda) + alpha * (alpha + 2.0 * lambda.real());
    bound = std::min(bound, 2.0 * re / denom);
  }
  if (!std::isfinite(bound)) throw DomainError("max_omega: no eigenvalue constrains omega");
  return bound;
}

double select_omega(double bound, double safety) {
  if (!(safety > 0.0 && safety < 1.0)) {
    throw DomainError("select_omega: safety must lie in (0,1), got " + std::to_string(safety));
  }
  if (!(bound > 0.0)) throw DomainError("select_omega: bound must be positive");
  return safety * bound;
}

void write_history_csv(std::ostream& out, const IterationHistory& history) {
  out << "iter,residual_norm,update_norm,error_norm,mvms\n";
  char buf[64];
  for (const auto& rec : history.records) {
    out << rec.iter << ',';
    std::snprintf(buf, sizeof buf, "%.17g", rec.residual_norm);
    out << buf << ',';
    if (std::isfinite(rec.update_norm)) {
      std::snprintf(buf, sizeof buf, "%.17g", rec.update_norm);
      out << buf;
    }
    out << ',';
    if (rec.error_norm) {
      std::snprintf(buf, sizeof buf, "%.17g", *rec.error_norm);
      out << buf;
    }
    out << ',' << rec.mvms << '\n';
  }
}

}  // namespace unmatched
