#pragma once

// Landweber, the BA iteration and the shifted BA iteration.
//
//   x^{k+1} = (1 - alpha*omega) x^k + omega B (b - A x^k),   x^0 = 0.
//
// alpha = 0 is the plain BA iteration; B = A^T additionally gives Landweber.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unmatched/linear_map.hpp"

namespace unmatched {

struct IterationConfig {
  double omega = 1.0;
  double alpha = 0.0;
  std::size_t max_iters = 1000;
  /// Stop once ||x^{k+1} - x^k|| <= tol * ||x^k|| and the fixed-point
  /// residual ||B b - (BA + alpha I) x^k|| <= tol * ||B b||. 0 disables.
  double fixed_point_tol = 0.0;
  std::size_t record_every = 1;
  /// Iterations below this index are recorded regardless of record_every.
  std::size_t record_head = 0;
  /// Called with (k, x^k) for every iterate, including x^0.
  std::function<void(std::size_t, const Vector&)> observer;
};

struct IterationRecord {
  std::size_t iter = 0;
  double residual_norm = 0.0;  // ||b - A x^k||
  double update_norm = 0.0;    // ||x^{k+1} - x^k||
  std::optional<double> error_norm;  // ||x^k - xbar|| / ||xbar||
  std::uint64_t mvms = 0;      // cumulative, including this step
};

struct IterationHistory {
  std::vector<IterationRecord> records;
  bool has_reference = false;
};

enum class Termination { fixed_point_reached, max_iters, diverged };

std::string to_string(Termination t);

struct SolveResult {
  Vector x;
  IterationHistory history;
  Termination termination = Termination::max_iters;
  /// Number of updates performed; x is x^{iterations}.
  std::size_t iterations = 0;
  /// Iteration index of the smallest recorded error_norm.
  std::optional<std::size_t> best_error_iteration;
};

/// Residual growth beyond this multiple of ||b|| is reported as divergence.
inline constexpr double kDivergenceFactor = 1e8;

/// x^{k+1} = x^k + omega A^T (b - A x^k) with an explicitly supplied transpose.
SolveResult landweber(const LinearMap& a, const LinearMap& a_transpose, const Vector& b,
                      const IterationConfig& config,
                      const std::optional<Vector>& reference = std::nullopt);

/// Requires config.alpha == 0.
SolveResult ba_iterate(const UnmatchedPair& pair, const Vector& b, const IterationConfig& config,
                       const std::optional<Vector>& reference = std::nullopt);

/// Requires config.alpha > 0.
SolveResult shifted_ba_iterate(const UnmatchedPair& pair, const Vector& b,
                               const IterationConfig& config,
                               const std::optional<Vector>& reference = std::nullopt);

/// Eigenvalues with |lambda| below this fraction of the largest |lambda| are
/// treated as zero by the step-size bounds.
inline constexpr double kZeroEigenvalueTol = 1e-12;

/// min over nonzero lambda of 2 Re(lambda) / |lambda|^2. Throws
/// InfeasibleError if some nonzero lambda has Re(lambda) <= 0.
double max_omega_ba(std::span<const std::complex<double>> eigenvalues);

/// min over lambda != -alpha of
///   2 (Re(lambda) + alpha) / (|lambda|^2 + alpha (alpha + 2 Re(lambda))).
/// Throws InfeasibleError if some such lambda has Re(lambda) + alpha <= 0.
double max_omega_shifted(std::span<const std::complex<double>> eigenvalues, double alpha);

/// safety * bound, safety in (0, 1).
double select_omega(double bound, double safety = 0.95);

/// CSV with header iter,residual_norm,update_norm,error_norm,mvms.
void write_history_csv(std::ostream& out, const IterationHistory& history);

}  // namespace unmatched
