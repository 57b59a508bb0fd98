#pragma once

// Batch experiments: build a problem, estimate the leftmost eigenvalue of BA,
// pick alpha and omega, iterate, and write the results to a run directory.

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "unmatched/iterative.hpp"
#include "unmatched/krylov.hpp"
#include "unmatched/linear_map.hpp"
#include "unmatched/test_problems.hpp"

namespace unmatched {

enum class ProblemKind { small_well, small_ill, ct, file };

std::string to_string(ProblemKind k);
ProblemKind parse_problem_kind(const std::string& s);

enum class OracleMode { automatic, on, off };

struct ExperimentConfig {
  // [problem]
  ProblemKind problem = ProblemKind::small_well;
  Index size = 64;               // m = n for the small problems
  double transpose_noise = 0.05; // ||B - A^T|| / ||A||
  double noise = 0.05;           // ||e|| / ||bbar||
  CtGeometry ct;
  CtRealization realization = CtRealization::matrix_free;
  std::string forward_file;  // file problems, Matrix Market
  std::string back_file;
  std::string rhs_file;
  std::string solution_file;  // optional

  // [estimator]
  std::string estimator = "ks";  // ks, fovN, dense
  EstimatorConfig est;
  int fallback_maxit = 20;

  // [solve]
  std::size_t max_iters = 0;  // 0: problem default
  double tol = 1e-6;
  std::size_t record_every = 0;  // 0: problem default
  std::size_t record_head = 2000;
  std::optional<double> alpha;  // overrides shift_factor * |Re theta|
  std::optional<double> omega;  // overrides safety * bound
  double shift_factor = 2.0;
  double safety = 0.95;
  OracleMode oracle = OracleMode::automatic;

  // [trials]
  int trials = 25;
  std::vector<std::string> trial_methods{"fov10", "fov15", "fov20", "ks"};

  // [scaling]
  std::vector<Index> sides{16, 24, 32};

  std::uint64_t seed = 1;
  std::string out_dir = "run";
};

/// Sets one key. Keys are `section.name` (for example `estimator.maxdim`)
/// or bare top-level names (`seed`, `out`). Throws DomainError on an unknown
/// key or a malformed value.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// key = value lines; `[section]` headers prefix later keys; `#` and `;`
/// start comments.
void load_config(ExperimentConfig& cfg, std::istream& in);
void load_config_file(ExperimentConfig& cfg, const std::string& path);

struct Problem {
  std::string name;
  UnmatchedPair pair;
  Vector bbar;
  Vector b;
  std::optional<Vector> xbar;
  /// Present when both dimensions are within the dense guard.
  std::optional<Matrix> a_dense;
  std::optional<Matrix> b_dense;
  /// Assembled sparse matrices for CT and file problems.
  std::optional<SparseMatrix> a_sparse;
  std::optional<SparseMatrix> b_sparse;
  std::vector<std::pair<std::string, std::string>> meta;
};

Problem build_problem(const ExperimentConfig& cfg);

/// Writes A, B, bbar, b (and xbar) as Matrix Market plus meta.txt; CT
/// problems also get phantom.csv and sinogram.csv.
void write_problem(const Problem& problem, const ExperimentConfig& cfg, const std::string& dir);

struct EstimateOutcome {
  std::string method;
  std::complex<double> theta;
  double residual = 0.0;  // NaN for fov
  std::uint64_t mvms = 0;
  std::uint64_t seed = 0;
  bool converged = true;
  /// Krylov-Schur did not converge and the value comes from the FOV method.
  bool fallback = false;
  /// Spectrum sample used for the step-size bound.
  std::vector<std::complex<double>> spectrum;
};

/// method: "ks", "dense" or "fov<N>".
EstimateOutcome estimate_leftmost(const Problem& problem, const ExperimentConfig& cfg,
                                  const std::string& method, std::uint64_t seed);

void write_eig_csv_header(std::ostream& out);
void write_eig_csv_row(std::ostream& out, const EstimateOutcome& e);

struct StepChoice {
  double alpha = 0.0;
  double omega = 0.0;
  /// Largest convergent omega for this alpha, from the spectrum sample.
  /// Absent when no omega converges.
  std::optional<double> bound;
  std::complex<double> binding_eigenvalue;
  std::string alpha_source;
  std::string omega_source;
};

/// Step for the shifted iteration. Throws InfeasibleError if the spectrum
/// sample admits no convergent omega or an explicit omega exceeds the bound.
StepChoice choose_shifted_step(const EstimateOutcome& est, const ExperimentConfig& cfg);
/// Step for the plain iteration. When Re(theta) <= 0 no bound exists and
/// omega = safety * 2 / rho is used for illustration.
StepChoice choose_plain_step(const EstimateOutcome& est, const ExperimentConfig& cfg);

struct MethodOutcome {
  std::string name;  // "ba" or "shifted"
  StepChoice step;
  SolveResult result;
  double fixed_point_residual = 0.0;  // ||B b - (BA + alpha I) x|| / ||B b||
  /// Relative distance of x to the dense closed-form limit.
  std::optional<double> limit_error;
};

struct PipelineResult {
  int exit_code = 0;
  EstimateOutcome estimate;
  std::optional<EstimateOutcome> dense;
  std::vector<MethodOutcome> methods;
  std::string recommended;  // "ba" or "shifted"
  std::string message;
};

/// Full run; writes meta.txt, eig.csv, params.txt, history_<method>.csv and
/// summary.txt into cfg.out_dir.
PipelineResult run_pipeline(const ExperimentConfig& cfg);

struct TrialRow {
  std::string method;
  int trial = 0;
  std::uint64_t seed = 0;
  double theta_re = 0.0;
  double theta_im = 0.0;
  std::uint64_t mvms = 0;
};

struct TrialStats {
  std::string method;
  double mean_mvms = 0.0;
  double mean_theta_re = 0.0;
  double std_theta_re = 0.0;  // sample standard deviation
};

struct TrialsResult {
  std::vector<TrialRow> rows;
  std::vector<TrialStats> stats;
};

/// cfg.trials seeds (cfg.seed, cfg.seed + 1, ...) per method. Writes
/// trials.csv and table.csv when write is set.
TrialsResult run_trials(const ExperimentConfig& cfg, bool write = true);

struct ScalingRow {
  Index side = 0;
  Index n = 0;
  Index m = 0;
  std::uint64_t mvms = 0;
  double theta_re = 0.0;
  bool converged = false;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  /// Least-squares slope of log(MVMs) against log(n); absent for one row.
  std::optional<double> slope;
};

/// Krylov-Schur MVMs on CT problems of each side, keeping the default
/// angle/detector ratios. Writes scaling.csv and scaling_fit.txt.
ScalingResult run_scaling(const ExperimentConfig& cfg, bool write = true);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

/// Dense cross-checks on a desk-scale problem. Throws SizeGuardError when
/// the problem is too large for the dense oracle.
VerifyReport verify(const ExperimentConfig& cfg);

}  // namespace unmatched
