// Command-line front end for the experiment runner.
//
//   unmatched <verb> [--config FILE] [--seed N] [--out DIR] [flags...]
//
// Exit codes: 0 success, 1 usage, 2 infeasible parameters, 3 verification
// failure, 4 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "unmatched/errors.hpp"
#include "unmatched/experiment.hpp"

using namespace unmatched;

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

// Flags that map one-to-one onto configuration keys.
const Flag kFlags[] = {
    {"--seed", "seed", "random seed"},
    {"--out", "out", "output directory"},
    {"--problem", "problem.kind", "small-well, small-ill, ct or file"},
    {"--size", "problem.size", "matrix size of the small problems"},
    {"--transpose-noise", "problem.transpose_noise", "||B - A^T|| / ||A|| for small problems"},
    {"--noise", "problem.noise", "relative data noise ||e|| / ||bbar||"},
    {"--side", "problem.side", "CT image side N"},
    {"--angles", "problem.angles", "CT projection angles"},
    {"--detectors", "problem.detectors", "CT detector pixels"},
    {"--realization", "problem.realization", "matrix_free or sparse"},
    {"--forward", "problem.forward", "Matrix Market file with A"},
    {"--back", "problem.back", "Matrix Market file with B"},
    {"--rhs", "problem.rhs", "Matrix Market file with the right-hand side"},
    {"--solution", "problem.solution", "Matrix Market file with the exact solution"},
    {"--estimator", "estimator.method", "ks, fovN or dense"},
    {"--mindim", "estimator.mindim", "restart dimension"},
    {"--maxdim", "estimator.maxdim", "maximal subspace dimension"},
    {"--eig-tol", "estimator.tol", "absolute eigenvalue residual tolerance"},
    {"--max-cycles", "estimator.max_cycles", "Krylov-Schur restart limit"},
    {"--max-iters", "solve.max_iters", "iteration limit"},
    {"--tol", "solve.tol", "fixed-point tolerance"},
    {"--record-every", "solve.record_every", "history stride"},
    {"--alpha", "solve.alpha", "shift (0 runs only the plain iteration)"},
    {"--omega", "solve.omega", "relaxation parameter"},
    {"--shift-factor", "solve.shift_factor", "alpha = factor * |Re(theta)|"},
    {"--safety", "solve.safety", "omega = safety * bound"},
    {"--oracle", "solve.oracle", "auto, on or off"},
    {"--trials", "trials.count", "number of seeds"},
    {"--methods", "trials.methods", "comma-separated estimators"},
    {"--sides", "scaling.sides", "comma-separated CT sides"},
};

struct Options {
  std::string config;
  std::map<std::string, std::string> values;  // key -> value, from flags
  std::vector<std::string> sets;              // raw key=value
};

void add_common(CLI::App* cmd, Options& opts) {
  cmd->add_option("--config", opts.config, "key=value configuration file")
      ->check(CLI::ExistingFile);
  for (const Flag& f : kFlags) {
    cmd->add_option_function<std::string>(
        f.name, [&opts, key = std::string(f.key)](const std::string& v) { opts.values[key] = v; },
        f.help);
  }
  cmd->add_option("--set", opts.sets, "extra key=value setting (repeatable)");
}

ExperimentConfig resolve(const Options& opts) {
  ExperimentConfig cfg;
  if (!opts.config.empty()) load_config_file(cfg, opts.config);
  for (const auto& [k, v] : opts.values) apply_setting(cfg, k, v);
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw DomainError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  return cfg;
}

int cmd_gen(const ExperimentConfig& cfg) {
  const Problem p = build_problem(cfg);
  write_problem(p, cfg, cfg.out_dir);
  std::cout << "wrote " << p.name << " problem (m=" << p.pair.data_size()
            << ", n=" << p.pair.image_size() << ") to " << cfg.out_dir << '\n';
  return 0;
}

int cmd_estimate(const ExperimentConfig& cfg) {
  const Problem p = build_problem(cfg);
  const EstimateOutcome e = estimate_leftmost(p, cfg, cfg.estimator, cfg.seed);
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(std::filesystem::path(cfg.out_dir) / "eig.csv");
  if (!out) throw IoError("cannot write eig.csv in " + cfg.out_dir);
  write_eig_csv_header(out);
  write_eig_csv_row(out, e);
  write_eig_csv_header(std::cout);
  write_eig_csv_row(std::cout, e);
  return 0;
}

int cmd_solve(const ExperimentConfig& cfg) {
  const PipelineResult r = run_pipeline(cfg);
  std::printf("leftmost estimate: %.6g%+.6gi (%s, %llu MVMs)\n", r.estimate.theta.real(),
              r.estimate.theta.imag(), r.estimate.method.c_str(),
              static_cast<unsigned long long>(r.estimate.mvms));
  for (const auto& m : r.methods) {
    std::printf("%-8s alpha=%.6g omega=%.6g -> %s after %zu iterations\n", m.name.c_str(),
                m.step.alpha, m.step.omega, to_string(m.result.termination).c_str(),
                m.result.iterations);
  }
  if (!r.message.empty()) std::printf("%s\n", r.message.c_str());
  std::printf("artifacts in %s\n", cfg.out_dir.c_str());
  return r.exit_code;
}

int cmd_trials(const ExperimentConfig& cfg) {
  const TrialsResult r = run_trials(cfg);
  std::printf("%-8s %10s %14s %12s\n", "method", "mean MVM", "mean Re(lm)", "std");
  for (const auto& s : r.stats) {
    std::printf("%-8s %10.1f %14.6g %12.4g\n", s.method.c_str(), s.mean_mvms, s.mean_theta_re,
                s.std_theta_re);
  }
  return 0;
}

int cmd_scaling(const ExperimentConfig& cfg) {
  const ScalingResult r = run_scaling(cfg);
  for (const auto& row : r.rows) {
    std::printf("N=%-5lld n=%-8lld MVMs=%llu\n", static_cast<long long>(row.side),
                static_cast<long long>(row.n), static_cast<unsigned long long>(row.mvms));
  }
  if (r.slope) std::printf("log-log slope %.4f\n", *r.slope);
  else std::printf("log-log slope undefined\n");
  return 0;
}

int cmd_verify(const ExperimentConfig& cfg) {
  const VerifyReport rep = verify(cfg);
  for (const auto& c : rep.checks) {
    std::printf("[%s] %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  }
  return rep.passed() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unmatched projector/backprojector experiments"};
  app.require_subcommand(1);

  struct Verb {
    const char* name;
    const char* help;
    int (*run)(const ExperimentConfig&);
  };
  const Verb verbs[] = {
      {"gen", "generate a problem and write it to disk", cmd_gen},
      {"estimate", "estimate the leftmost eigenvalue of BA", cmd_estimate},
      {"solve", "estimate, choose alpha and omega, iterate", cmd_solve},
      {"trials", "estimator statistics over seeds", cmd_trials},
      {"scaling", "Krylov-Schur MVMs versus CT problem size", cmd_scaling},
      {"verify", "dense cross-checks of the fixed-point theory", cmd_verify},
  };
  std::vector<Options> opts(std::size(verbs));
  std::vector<CLI::App*> cmds;
  for (std::size_t i = 0; i < std::size(verbs); ++i) {
    cmds.push_back(app.add_subcommand(verbs[i].name, verbs[i].help));
    add_common(cmds.back(), opts[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  for (std::size_t i = 0; i < std::size(verbs); ++i) {
    if (!cmds[i]->parsed()) continue;
    try {
      return verbs[i].run(resolve(opts[i]));
    } catch (const InfeasibleError& e) {
      std::fprintf(stderr, "infeasible: %s\n", e.what());
      return 2;
    } catch (const IoError& e) {
      std::fprintf(stderr, "I/O error: %s\n", e.what());
      return 4;
    } catch (const std::filesystem::filesystem_error& e) {
      std::fprintf(stderr, "I/O error: %s\n", e.what());
      return 4;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 1;
    }
  }
  return 1;
}
