#include "unmatched/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/QR>

#include "unmatched/dense_oracle.hpp"
#include "unmatched/errors.hpp"
#include "unmatched/matrix_market.hpp"

namespace unmatched {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string complex_str(std::complex<double> z) {
  return "(" + short_num(z.real()) + ", " + short_num(z.imag()) + ")";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw DomainError("bad number for " + key + ": '" + v + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw DomainError("bad integer for " + key + ": '" + v + "'");
  }
  return out;
}

long long parse_positive(const std::string& key, const std::string& v) {
  const long long x = parse_int(key, v);
  if (x < 1) throw DomainError(key + " must be positive");
  return x;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_key_values(const fs::path& p,
                      const std::vector<std::pair<std::string, std::string>>& kv) {
  auto out = open_out(p);
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  if (!out) throw IoError("write failed for " + p.string());
}

bool use_oracle(const ExperimentConfig& cfg, const Problem& p) {
  if (cfg.oracle == OracleMode::off) return false;
  return p.a_dense.has_value();
}

std::size_t default_max_iters(const ExperimentConfig& cfg) {
  if (cfg.max_iters) return cfg.max_iters;
  return cfg.problem == ProblemKind::ct ? 20000 : 1000000;
}

std::size_t default_record_every(const ExperimentConfig& cfg) {
  if (cfg.record_every) return cfg.record_every;
  return cfg.problem == ProblemKind::ct ? 10 : 100;
}

double fixed_point_residual(const Problem& p, const Vector& x, double alpha) {
  const Vector bb = p.pair.back().apply(p.b);
  Vector r = bb - p.pair.back().apply(p.pair.forward().apply(x));
  if (alpha != 0.0) r -= alpha * x;
  const double scale = bb.norm();
  return scale > 0.0 ? r.norm() / scale : r.norm();
}

double relative_error(const Vector& x, const Vector& ref) {
  const double s = ref.norm();
  return s > 0.0 ? (x - ref).norm() / s : (x - ref).norm();
}

std::complex<double> binding(const std::vector<std::complex<double>>& eigs, double alpha) {
  std::complex<double> best = eigs.empty() ? std::complex<double>() : eigs.front();
  double bound = std::numeric_limits<double>::infinity();
  double scale = alpha;
  for (const auto& l : eigs) scale = std::max(scale, std::abs(l));
  for (const auto& l : eigs) {
    if (std::abs(l + alpha) <= kZeroEigenvalueTol * scale) continue;
    const double re = l.real() + alpha;
    if (re <= 0.0) return l;
    const double b = 2.0 * re / (std::norm(l) + alpha * (alpha + 2.0 * l.real()));
    if (b < bound) {
      bound = b;
      best = l;
    }
  }
  return best;
}

void append_theta(std::vector<std::complex<double>>& spectrum, std::complex<double> theta) {
  spectrum.push_back(theta);
  if (theta.imag() != 0.0) spectrum.push_back(std::conj(theta));
}

int fov_maxit(const std::string& method) {
  if (method.size() <= 3 || method.compare(0, 3, "fov") != 0) return 0;
  const long long n = parse_int("estimator", method.substr(3));
  if (n < 1) throw DomainError("fov iteration count must be positive: " + method);
  return static_cast<int>(n);
}

}  // namespace

std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::small_well: return "small-well";
    case ProblemKind::small_ill: return "small-ill";
    case ProblemKind::ct: return "ct";
    case ProblemKind::file: return "file";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(const std::string& s) {
  if (s == "small-well") return ProblemKind::small_well;
  if (s == "small-ill") return ProblemKind::small_ill;
  if (s == "ct") return ProblemKind::ct;
  if (s == "file") return ProblemKind::file;
  throw DomainError("unknown problem '" + s + "' (small-well, small-ill, ct, file)");
}

void apply_setting(ExperimentConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "seed") {
    const long long s = parse_int(key, v);
    if (s < 0) throw DomainError("seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(s);
  } else if (key == "out") {
    cfg.out_dir = v;
  } else if (key == "problem.kind") {
    cfg.problem = parse_problem_kind(v);
  } else if (key == "problem.size") {
    cfg.size = parse_positive(key, v);
  } else if (key == "problem.transpose_noise") {
    cfg.transpose_noise = parse_double(key, v);
    if (!(cfg.transpose_noise >= 0.0)) throw DomainError(key + " must be nonnegative");
  } else if (key == "problem.noise") {
    cfg.noise = parse_double(key, v);
    if (!(cfg.noise >= 0.0)) throw DomainError(key + " must be nonnegative");
  } else if (key == "problem.side") {
    cfg.ct.image_side = parse_positive(key, v);
  } else if (key == "problem.angles") {
    cfg.ct.num_angles = parse_positive(key, v);
  } else if (key == "problem.detectors") {
    cfg.ct.num_detector_pixels = parse_positive(key, v);
  } else if (key == "problem.detector_length") {
    cfg.ct.detector_length = parse_double(key, v);
    if (!(cfg.ct.detector_length > 0.0)) throw DomainError(key + " must be positive");
  } else if (key == "problem.realization") {
    if (v == "matrix_free") cfg.realization = CtRealization::matrix_free;
    else if (v == "sparse") cfg.realization = CtRealization::sparse;
    else throw DomainError(key + " must be matrix_free or sparse");
  } else if (key == "problem.forward") {
    cfg.forward_file = v;
  } else if (key == "problem.back") {
    cfg.back_file = v;
  } else if (key == "problem.rhs") {
    cfg.rhs_file = v;
  } else if (key == "problem.solution") {
    cfg.solution_file = v;
  } else if (key == "estimator.method") {
    if (v != "ks" && v != "dense" && fov_maxit(v) == 0) {
      throw DomainError("unknown estimator '" + v + "' (ks, fovN, dense)");
    }
    cfg.estimator = v;
  } else if (key == "estimator.mindim") {
    cfg.est.mindim = parse_positive(key, v);
  } else if (key == "estimator.maxdim") {
    cfg.est.maxdim = parse_positive(key, v);
  } else if (key == "estimator.tol") {
    cfg.est.tol = parse_double(key, v);
    if (!(cfg.est.tol > 0.0)) throw DomainError(key + " must be positive");
  } else if (key == "estimator.max_cycles") {
    cfg.est.max_cycles = static_cast<int>(parse_positive(key, v));
  } else if (key == "estimator.fallback_maxit") {
    cfg.fallback_maxit = static_cast<int>(parse_positive(key, v));
  } else if (key == "solve.max_iters") {
    cfg.max_iters = static_cast<std::size_t>(parse_positive(key, v));
  } else if (key == "solve.tol") {
    cfg.tol = parse_double(key, v);
    if (!(cfg.tol >= 0.0)) throw DomainError(key + " must be nonnegative");
  } else if (key == "solve.record_every") {
    cfg.record_every = static_cast<std::size_t>(parse_positive(key, v));
  } else if (key == "solve.record_head") {
    const long long h = parse_int(key, v);
    if (h < 0) throw DomainError(key + " must be nonnegative");
    cfg.record_head = static_cast<std::size_t>(h);
  } else if (key == "solve.alpha") {
    const double a = parse_double(key, v);
    if (!(a >= 0.0)) throw DomainError(key + " must be nonnegative");
    cfg.alpha = a;
  } else if (key == "solve.omega") {
    const double w = parse_double(key, v);
    if (!(w > 0.0)) throw DomainError(key + " must be positive");
    cfg.omega = w;
  } else if (key == "solve.shift_factor") {
    cfg.shift_factor = parse_double(key, v);
    if (!(cfg.shift_factor >= 1.0)) throw DomainError(key + " must be at least 1");
  } else if (key == "solve.safety") {
    cfg.safety = parse_double(key, v);
    if (!(cfg.safety > 0.0)) throw DomainError(key + " must be positive");
  } else if (key == "solve.oracle") {
    if (v == "auto") cfg.oracle = OracleMode::automatic;
    else if (v == "on") cfg.oracle = OracleMode::on;
    else if (v == "off") cfg.oracle = OracleMode::off;
    else throw DomainError(key + " must be auto, on or off");
  } else if (key == "trials.count") {
    cfg.trials = static_cast<int>(parse_positive(key, v));
  } else if (key == "trials.methods") {
    auto methods = split_list(v);
    if (methods.empty()) throw DomainError(key + " is empty");
    for (const auto& m : methods) {
      if (m != "ks" && m != "dense" && fov_maxit(m) == 0) {
        throw DomainError("unknown estimator '" + m + "' in " + key);
      }
    }
    cfg.trial_methods = std::move(methods);
  } else if (key == "scaling.sides") {
    std::vector<Index> sides;
    for (const auto& s : split_list(v)) sides.push_back(parse_positive(key, s));
    if (sides.empty()) throw DomainError(key + " is empty");
    cfg.sides = std::move(sides);
  } else {
    throw DomainError("unknown configuration key '" + key + "'");
  }
}

void load_config(ExperimentConfig& cfg, std::istream& in) {
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto c = line.find_first_of("#;");
    if (c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw DomainError("line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DomainError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    apply_setting(cfg, section.empty() ? key : section + "." + key, line.substr(eq + 1));
  }
}

void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  load_config(cfg, in);
}

Problem build_problem(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> meta{
      {"problem", to_string(cfg.problem)}, {"seed", std::to_string(cfg.seed)},
      {"noise", num(cfg.noise)}};

  if (cfg.problem == ProblemKind::small_well || cfg.problem == ProblemKind::small_ill) {
    const double decay = cfg.problem == ProblemKind::small_well ? -2.0 : -4.0;
    IllPosedMatrixSpec spec;
    spec.m = spec.n = cfg.size;
    spec.singular_values = logspace(0.0, decay, static_cast<std::size_t>(cfg.size));
    spec.seed = cfg.seed;
    Matrix a = make_ill_posed_matrix(spec);
    Matrix b = make_unmatched_transpose(a, cfg.transpose_noise, cfg.seed);
    Vector xbar = make_two_hump_solution(cfg.size);
    Vector bbar = a * xbar;
    Vector rhs = add_noise(bbar, {cfg.noise, cfg.seed});
    meta.emplace_back("m", std::to_string(cfg.size));
    meta.emplace_back("n", std::to_string(cfg.size));
    meta.emplace_back("singular_values", "logspace(0," + short_num(decay) + "," +
                                             std::to_string(cfg.size) + ")");
    meta.emplace_back("transpose_noise", num(cfg.transpose_noise));
    meta.emplace_back("solution", "two-hump");
    Problem p{to_string(cfg.problem), make_dense_pair(a, b), bbar, rhs, xbar, a, b,
              std::nullopt, std::nullopt, meta};
    return p;
  }

  if (cfg.problem == ProblemKind::ct) {
    const CtGeometry& g = cfg.ct;
    validate(g);
    UnmatchedPair pair = make_ct_pair(g, cfg.realization);
    SparseMatrix a = ct_forward_matrix(g);
    SparseMatrix b = ct_back_matrix(g);
    Vector xbar = make_shepp_logan(g.image_side);
    Vector bbar = pair.forward().apply(xbar);
    Vector rhs = add_noise(bbar, {cfg.noise, cfg.seed});
    meta.emplace_back("m", std::to_string(g.data_size()));
    meta.emplace_back("n", std::to_string(g.image_size()));
    meta.emplace_back("image_side", std::to_string(g.image_side));
    meta.emplace_back("angles", std::to_string(g.num_angles));
    meta.emplace_back("detectors", std::to_string(g.num_detector_pixels));
    meta.emplace_back("detector_length", num(g.detector_length));
    meta.emplace_back("realization",
                      cfg.realization == CtRealization::sparse ? "sparse" : "matrix_free");
    meta.emplace_back("solution", "shepp-logan");
    std::optional<Matrix> ad;
    std::optional<Matrix> bd;
    if (g.data_size() <= kDenseGuard && g.image_size() <= kDenseGuard) {
      ad = Matrix(a);
      bd = Matrix(b);
    }
    // The pair must not be reset by densification, so it is built first and
    // its counter only sees the bbar application.
    return Problem{"ct", pair, bbar, rhs, xbar, ad, bd, std::move(a), std::move(b), meta};
  }

  if (cfg.forward_file.empty() || cfg.back_file.empty() || cfg.rhs_file.empty()) {
    throw DomainError("file problems need problem.forward, problem.back and problem.rhs");
  }
  SparseMatrix a = read_matrix_market_sparse(cfg.forward_file);
  SparseMatrix b = read_matrix_market_sparse(cfg.back_file);
  if (b.rows() != a.cols() || b.cols() != a.rows()) {
    throw ShapeError("back matrix must be " + std::to_string(a.cols()) + "x" +
                     std::to_string(a.rows()));
  }
  Vector bbar = read_matrix_market_vector(cfg.rhs_file);
  if (bbar.size() != a.rows()) throw ShapeError("right-hand side length does not match A");
  std::optional<Vector> xbar;
  if (!cfg.solution_file.empty()) {
    xbar = read_matrix_market_vector(cfg.solution_file);
    if (xbar->size() != a.cols()) throw ShapeError("solution length does not match A");
  }
  Vector rhs = add_noise(bbar, {cfg.noise, cfg.seed});
  meta.emplace_back("m", std::to_string(a.rows()));
  meta.emplace_back("n", std::to_string(a.cols()));
  meta.emplace_back("forward", cfg.forward_file);
  meta.emplace_back("back", cfg.back_file);
  meta.emplace_back("rhs", cfg.rhs_file);
  std::optional<Matrix> ad;
  std::optional<Matrix> bd;
  if (a.rows() <= kDenseGuard && a.cols() <= kDenseGuard) {
    ad = Matrix(a);
    bd = Matrix(b);
  }
  UnmatchedPair pair(make_sparse_map(a), make_sparse_map(b));
  return Problem{"file", pair, bbar, rhs, xbar, ad, bd, std::move(a), std::move(b), meta};
}

void write_problem(const Problem& p, const ExperimentConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  const fs::path d(dir);
  if (p.a_sparse) {
    write_matrix_market(d / "A.mtx", *p.a_sparse);
    write_matrix_market(d / "B.mtx", *p.b_sparse);
  } else {
    write_matrix_market(d / "A.mtx", *p.a_dense);
    write_matrix_market(d / "B.mtx", *p.b_dense);
  }
  write_matrix_market(d / "bbar.mtx", p.bbar);
  write_matrix_market(d / "b.mtx", p.b);
  if (p.xbar) write_matrix_market(d / "xbar.mtx", *p.xbar);
  if (cfg.problem == ProblemKind::ct) {
    write_grid_csv((d / "phantom.csv").string(), *p.xbar, cfg.ct.image_side, cfg.ct.image_side);
    write_grid_csv((d / "sinogram.csv").string(), p.b, cfg.ct.num_angles,
                   cfg.ct.num_detector_pixels);
  }
  write_key_values(d / "meta.txt", p.meta);
}

EstimateOutcome estimate_leftmost(const Problem& p, const ExperimentConfig& cfg,
                                  const std::string& method, std::uint64_t seed) {
  EstimateOutcome out;
  out.method = method;
  out.seed = seed;
  EstimatorConfig ec = cfg.est;
  ec.seed = seed;

  if (method == "dense") {
    if (!p.a_dense) throw SizeGuardError("dense estimator: problem exceeds the dense guard");
    const Matrix ba = *p.b_dense * *p.a_dense;
    const EigEstimate e = dense_leftmost(ba);
    out.theta = e.theta;
    out.residual = e.residual;
    out.mvms = 0;
    out.spectrum = dense_eigenvalues(ba);
    return out;
  }

  if (method == "ks") {
    const EigEstimate e = krylov_schur_leftmost(p.pair, ec);
    out.theta = e.theta;
    out.residual = e.residual;
    out.mvms = e.mvms;
    out.converged = e.converged;
    out.spectrum = e.ritz_values;
    append_theta(out.spectrum, e.theta);
    if (!e.converged) {
      const FovEstimate f = fov_leftmost(p.pair, ec, cfg.fallback_maxit);
      out.fallback = true;
      out.theta = {f.value, 0.0};
      out.residual = kNaN;
      out.mvms += f.mvms;
      out.spectrum.insert(out.spectrum.end(), f.ritz_values.begin(), f.ritz_values.end());
      out.spectrum.emplace_back(f.value, 0.0);
    }
    return out;
  }

  const int maxit = fov_maxit(method);
  if (maxit == 0) throw DomainError("unknown estimator '" + method + "'");
  const FovEstimate f = fov_leftmost(p.pair, ec, maxit);
  out.theta = {f.value, 0.0};
  out.residual = kNaN;
  out.mvms = f.mvms;
  out.spectrum = f.ritz_values;
  out.spectrum.emplace_back(f.value, 0.0);
  return out;
}

void write_eig_csv_header(std::ostream& out) {
  out << "method,theta_re,theta_im,residual,mvms,seed\n";
}

void write_eig_csv_row(std::ostream& out, const EstimateOutcome& e) {
  out << e.method << (e.fallback ? "+fov" : "") << ',' << num(e.theta.real()) << ','
      << num(e.theta.imag()) << ',' << num(e.residual) << ',' << e.mvms << ',' << e.seed << '\n';
}

StepChoice choose_shifted_step(const EstimateOutcome& est, const ExperimentConfig& cfg) {
  StepChoice s;
  if (cfg.alpha) {
    s.alpha = *cfg.alpha;
    s.alpha_source = "config";
  } else {
    s.alpha = cfg.shift_factor * std::abs(est.theta.real());
    s.alpha_source = short_num(cfg.shift_factor) + "*|Re(theta)|";
  }
  if (!(s.alpha > 0.0)) throw DomainError("shifted iteration needs alpha > 0");
  s.bound = max_omega_shifted(est.spectrum, s.alpha);
  s.binding_eigenvalue = binding(est.spectrum, s.alpha);
  if (cfg.omega) {
    s.omega = *cfg.omega;
    s.omega_source = "config";
  } else {
    s.omega = cfg.safety * *s.bound;
    s.omega_source = short_num(cfg.safety) + "*bound";
  }
  if (!(s.omega < *s.bound)) {
    throw InfeasibleError("omega = " + short_num(s.omega) + " is not below the bound " +
                              short_num(*s.bound) + " set by eigenvalue " +
                              complex_str(s.binding_eigenvalue),
                          s.binding_eigenvalue);
  }
  return s;
}

StepChoice choose_plain_step(const EstimateOutcome& est, const ExperimentConfig& cfg) {
  StepChoice s;
  s.alpha = 0.0;
  s.alpha_source = "none";
  try {
    s.bound = max_omega_ba(est.spectrum);
  } catch (const InfeasibleError& e) {
    s.binding_eigenvalue = e.eigenvalue();
  }
  if (s.bound) {
    s.binding_eigenvalue = binding(est.spectrum, 0.0);
    if (cfg.omega) {
      s.omega = *cfg.omega;
      s.omega_source = "config";
    } else {
      s.omega = cfg.safety * *s.bound;
      s.omega_source = short_num(cfg.safety) + "*bound";
    }
    if (!(s.omega < *s.bound)) {
      throw InfeasibleError("omega = " + short_num(s.omega) + " is not below the bound " +
                                short_num(*s.bound) + " set by eigenvalue " +
                                complex_str(s.binding_eigenvalue),
                            s.binding_eigenvalue);
    }
    return s;
  }
  double rho = 0.0;
  for (const auto& l : est.spectrum) rho = std::max(rho, std::abs(l));
  if (cfg.omega) {
    s.omega = *cfg.omega;
    s.omega_source = "config";
  } else {
    s.omega = std::min(cfg.safety, 0.95) * 2.0 / rho;
    s.omega_source = "safety*2/rho (no convergent omega)";
  }
  return s;
}

namespace {

MethodOutcome run_method(const Problem& p, const ExperimentConfig& cfg, const std::string& name,
                         const StepChoice& step) {
  IterationConfig ic;
  ic.omega = step.omega;
  ic.alpha = step.alpha;
  ic.max_iters = default_max_iters(cfg);
  ic.fixed_point_tol = cfg.tol;
  ic.record_every = default_record_every(cfg);
  ic.record_head = cfg.record_head;
  MethodOutcome m{name, step, {}, 0.0, std::nullopt};
  m.result = step.alpha > 0.0 ? shifted_ba_iterate(p.pair, p.b, ic, p.xbar)
                              : ba_iterate(p.pair, p.b, ic, p.xbar);
  if (m.result.termination != Termination::diverged) {
    m.fixed_point_residual = fixed_point_residual(p, m.result.x, step.alpha);
  } else {
    m.fixed_point_residual = std::numeric_limits<double>::infinity();
  }
  return m;
}

void write_params(const fs::path& path, const PipelineResult& r, const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv{
      {"estimator", r.estimate.method + (r.estimate.fallback ? "+fov" : "")},
      {"theta_re", num(r.estimate.theta.real())},
      {"theta_im", num(r.estimate.theta.imag())},
      {"shift_factor", num(cfg.shift_factor)},
      {"safety", num(cfg.safety)},
      {"recommended", r.recommended}};
  for (const auto& m : r.methods) {
    kv.emplace_back(m.name + ".alpha", num(m.step.alpha));
    kv.emplace_back(m.name + ".alpha_source", m.step.alpha_source);
    kv.emplace_back(m.name + ".omega", num(m.step.omega));
    kv.emplace_back(m.name + ".omega_source", m.step.omega_source);
    kv.emplace_back(m.name + ".omega_bound", m.step.bound ? num(*m.step.bound) : "none");
    kv.emplace_back(m.name + ".binding_eigenvalue_re", num(m.step.binding_eigenvalue.real()));
    kv.emplace_back(m.name + ".binding_eigenvalue_im", num(m.step.binding_eigenvalue.imag()));
  }
  write_key_values(path, kv);
}

void write_summary(const fs::path& path, const PipelineResult& r, const Problem& p) {
  std::vector<std::pair<std::string, std::string>> kv{
      {"problem", p.name},
      {"status", r.exit_code == 0 ? "ok" : "aborted"},
      {"estimate", complex_str(r.estimate.theta) + " via " + r.estimate.method},
      {"estimate_converged", r.estimate.converged ? "yes" : "no"},
      {"estimate_fallback", r.estimate.fallback ? "fov" : "none"},
      {"recommended", r.recommended}};
  if (!r.message.empty()) kv.emplace_back("message", r.message);
  if (r.dense) {
    kv.emplace_back("dense_leftmost", complex_str(r.dense->theta));
    kv.emplace_back("estimate_error_re",
                    short_num(std::abs(r.dense->theta.real() - r.estimate.theta.real())));
  }
  for (const auto& m : r.methods) {
    const auto& res = m.result;
    kv.emplace_back(m.name + ".termination", to_string(res.termination));
    kv.emplace_back(m.name + ".iterations", std::to_string(res.iterations));
    kv.emplace_back(m.name + ".fixed_point_residual", short_num(m.fixed_point_residual));
    if (res.best_error_iteration) {
      double best = 0.0;
      for (const auto& rec : res.history.records) {
        if (rec.iter == *res.best_error_iteration) best = *rec.error_norm;
      }
      kv.emplace_back(m.name + ".best_error_iteration", std::to_string(*res.best_error_iteration));
      kv.emplace_back(m.name + ".best_error", short_num(best));
    }
    if (m.limit_error) kv.emplace_back(m.name + ".dense_limit_error", short_num(*m.limit_error));
    if (r.dense && m.step.bound) {
      try {
        const double dense_bound = max_omega_shifted(r.dense->spectrum, m.step.alpha);
        kv.emplace_back(m.name + ".dense_omega_bound", short_num(dense_bound));
        kv.emplace_back(m.name + ".omega_below_dense_bound",
                        m.step.omega < dense_bound ? "yes" : "no");
      } catch (const InfeasibleError& e) {
        kv.emplace_back(m.name + ".dense_omega_bound", "none, eigenvalue " +
                                                           complex_str(e.eigenvalue()));
      }
    }
  }
  write_key_values(path, kv);
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  const Problem p = build_problem(cfg);
  write_key_values(dir / "meta.txt", p.meta);

  PipelineResult r;
  r.estimate = estimate_leftmost(p, cfg, cfg.estimator, cfg.seed);
  if (use_oracle(cfg, p)) {
    r.dense = cfg.estimator == "dense" ? r.estimate : estimate_leftmost(p, cfg, "dense", cfg.seed);
  }
  {
    auto out = open_out(dir / "eig.csv");
    write_eig_csv_header(out);
    write_eig_csv_row(out, r.estimate);
    if (r.dense && cfg.estimator != "dense") write_eig_csv_row(out, *r.dense);
  }
  r.recommended = r.estimate.theta.real() > 0.0 ? "ba" : "shifted";

  std::vector<std::pair<std::string, StepChoice>> steps;
  try {
    const bool plain_only = cfg.alpha && *cfg.alpha == 0.0;
    if (plain_only) {
      StepChoice s = choose_plain_step(r.estimate, cfg);
      if (!s.bound) {
        throw InfeasibleError("alpha = 0 but eigenvalue " + complex_str(s.binding_eigenvalue) +
                                  " has Re <= 0; no omega converges",
                              s.binding_eigenvalue);
      }
      steps.emplace_back("ba", s);
    } else {
      // Without an explicit omega the plain run is always made for
      // comparison; an explicit omega is held to the shifted bound only.
      ExperimentConfig plain_cfg = cfg;
      if (cfg.omega) plain_cfg.omega.reset();
      steps.emplace_back("ba", choose_plain_step(r.estimate, plain_cfg));
      steps.emplace_back("shifted", choose_shifted_step(r.estimate, cfg));
    }
  } catch (const InfeasibleError& e) {
    r.exit_code = 2;
    r.message = std::string("infeasible parameters: ") + e.what();
    write_params(dir / "params.txt", r, cfg);
    write_summary(dir / "summary.txt", r, p);
    return r;
  }

  for (const auto& [name, step] : steps) {
    MethodOutcome m = run_method(p, cfg, name, step);
    if (r.dense && m.result.termination == Termination::fixed_point_reached) {
      try {
        if (step.alpha > 0.0) {
          m.limit_error = relative_error(
              m.result.x, fixed_point_shifted(*p.a_dense, *p.b_dense, p.b, step.alpha).via_ab);
        } else {
          m.limit_error =
              relative_error(m.result.x, fixed_point_ba(*p.a_dense, *p.b_dense, p.b).x);
        }
      } catch (const std::exception&) {
        // No closed form (for example, no unique fixed point).
      }
    }
    auto out = open_out(dir / ("history_" + name + ".csv"));
    write_history_csv(out, m.result.history);
    r.methods.push_back(std::move(m));
  }
  if (r.estimate.fallback) r.message = "Krylov-Schur did not converge; used FOV fallback";
  write_params(dir / "params.txt", r, cfg);
  write_summary(dir / "summary.txt", r, p);
  return r;
}

TrialsResult run_trials(const ExperimentConfig& cfg, bool write) {
  const Problem p = build_problem(cfg);
  TrialsResult out;
  for (const auto& method : cfg.trial_methods) {
    TrialStats st;
    st.method = method;
    std::vector<double> values;
    double mvms = 0.0;
    for (int t = 0; t < cfg.trials; ++t) {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(t);
      const EstimateOutcome e = estimate_leftmost(p, cfg, method, seed);
      out.rows.push_back({method, t + 1, seed, e.theta.real(), e.theta.imag(), e.mvms});
      values.push_back(e.theta.real());
      mvms += static_cast<double>(e.mvms);
    }
    const double n = static_cast<double>(values.size());
    st.mean_mvms = mvms / n;
    st.mean_theta_re = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - st.mean_theta_re) * (v - st.mean_theta_re);
    st.std_theta_re = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    out.stats.push_back(st);
  }
  if (write) {
    ensure_dir(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    write_key_values(dir / "meta.txt", p.meta);
    auto rows = open_out(dir / "trials.csv");
    rows << "method,trial,seed,theta_re,theta_im,mvms\n";
    for (const auto& r : out.rows) {
      rows << r.method << ',' << r.trial << ',' << r.seed << ',' << num(r.theta_re) << ','
           << num(r.theta_im) << ',' << r.mvms << '\n';
    }
    auto table = open_out(dir / "table.csv");
    table << "method,mean_mvms,mean_theta_re,std_theta_re\n";
    for (const auto& s : out.stats) {
      table << s.method << ',' << num(s.mean_mvms) << ',' << num(s.mean_theta_re) << ','
            << num(s.std_theta_re) << '\n';
    }
  }
  return out;
}

ScalingResult run_scaling(const ExperimentConfig& cfg, bool write) {
  ScalingResult out;
  const double angle_ratio = static_cast<double>(cfg.ct.num_angles) /
                             static_cast<double>(cfg.ct.image_side);
  const double det_ratio = static_cast<double>(cfg.ct.num_detector_pixels) /
                           static_cast<double>(cfg.ct.image_side);
  for (Index side : cfg.sides) {
    CtGeometry g = cfg.ct;
    g.image_side = side;
    g.num_angles = std::max<Index>(1, std::lround(angle_ratio * static_cast<double>(side)));
    g.num_detector_pixels = std::max<Index>(1, std::lround(det_ratio * static_cast<double>(side)));
    const UnmatchedPair pair = make_ct_pair(g, cfg.realization);
    EstimatorConfig ec = cfg.est;
    ec.seed = cfg.seed;
    const EigEstimate e = krylov_schur_leftmost(pair, ec);
    out.rows.push_back({side, g.image_size(), g.data_size(), e.mvms, e.theta.real(), e.converged});
  }
  if (out.rows.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(out.rows.size());
    for (const auto& r : out.rows) {
      const double x = std::log(static_cast<double>(r.n));
      const double y = std::log(static_cast<double>(r.mvms));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double den = k * sxx - sx * sx;
    if (den > 0.0) out.slope = (k * sxy - sx * sy) / den;
  }
  if (write) {
    ensure_dir(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    auto csv = open_out(dir / "scaling.csv");
    csv << "side,n,m,mvms,theta_re,converged\n";
    for (const auto& r : out.rows) {
      csv << r.side << ',' << r.n << ',' << r.m << ',' << r.mvms << ',' << num(r.theta_re) << ','
          << (r.converged ? 1 : 0) << '\n';
    }
    auto fit = open_out(dir / "scaling_fit.txt");
    fit << "slope=" << (out.slope ? num(*out.slope) : std::string("undefined")) << '\n';
  }
  return out;
}

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

VerifyReport verify(const ExperimentConfig& cfg) {
  const Problem p = build_problem(cfg);
  if (!p.a_dense) throw SizeGuardError("verify: problem exceeds the dense guard");
  const Matrix& a = *p.a_dense;
  const Matrix& b = *p.b_dense;
  const Index n = a.cols();
  const Matrix ba = b * a;

  VerifyReport rep;
  auto add = [&](std::string name, bool ok, std::string detail) {
    rep.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  const FixedPointConditions cond = check_unique_fixed_point(a, b);
  add("fixed-point-conditions", cond.agree,
      cond.agree ? std::string(cond.consensus ? "all hold" : "none hold") : cond.diagnostic);

  const EstimateOutcome dense = estimate_leftmost(p, cfg, "dense", cfg.seed);
  const double lm = dense.theta.real();

  {
    const EstimateOutcome est = estimate_leftmost(p, cfg, cfg.estimator, cfg.seed);
    const double err = std::abs(est.theta.real() - lm);
    if (est.method == "ks" && !est.fallback) {
      add("leftmost-estimate", err <= 10.0 * cfg.est.tol,
          "|Re(theta) - Re(lambda_lm)| = " + short_num(err));
    } else if (est.method == "dense") {
      add("leftmost-estimate", true, "dense");
    } else {
      const double nu = numerical_abscissa_left(ba);
      add("leftmost-estimate", est.theta.real() >= nu - 1e-10 * std::max(1.0, std::abs(nu)),
          "fov value " + short_num(est.theta.real()) + " vs min Re W(BA) " + short_num(nu));
    }
  }

  double alpha = cfg.alpha ? *cfg.alpha : cfg.shift_factor * std::abs(lm);
  std::optional<double> bound;
  std::string why;
  try {
    bound = max_omega_shifted(dense.spectrum, alpha);
  } catch (const InfeasibleError& e) {
    why = "no convergent omega for alpha = " + short_num(alpha) + ": eigenvalue " +
          complex_str(e.eigenvalue()) + " has Re(lambda) + alpha <= 0";
  }
  double omega = 0.0;
  if (bound) omega = cfg.omega ? *cfg.omega : cfg.safety * *bound;

  std::optional<SolveResult> solved;
  if (bound && omega < *bound) {
    IterationConfig ic;
    ic.alpha = alpha;
    ic.omega = omega;
    ic.fixed_point_tol = 1e-10;
    ic.max_iters = cfg.max_iters ? cfg.max_iters : 4000000;
    ic.record_every = ic.max_iters;
    solved = alpha > 0.0 ? shifted_ba_iterate(p.pair, p.b, ic) : ba_iterate(p.pair, p.b, ic);
    const bool ok = solved->termination == Termination::fixed_point_reached;
    add("convergence-dichotomy", ok,
        "alpha = " + short_num(alpha) + ", omega = " + short_num(omega) + " < bound " +
            short_num(*bound) + "; " + to_string(solved->termination) + " after " +
            std::to_string(solved->iterations) + " iterations");
  } else if (bound) {
    add("convergence-dichotomy", false,
        "omega = " + short_num(omega) + " exceeds the step-size bound " + short_num(*bound) +
            " set by eigenvalue " + complex_str(binding(dense.spectrum, alpha)));
  } else {
    add("convergence-dichotomy", false, why);
  }

  if (solved && solved->termination == Termination::fixed_point_reached) {
    try {
      double err = 0.0;
      if (alpha > 0.0) {
        const ShiftedFixedPoint fp = fixed_point_shifted(a, b, p.b, alpha);
        err = relative_error(solved->x, fp.via_ab);
      } else {
        err = relative_error(solved->x, fixed_point_ba(a, b, p.b).x);
      }
      add("fixed-point-limit", err <= 1e-6, "relative distance " + short_num(err));
    } catch (const std::exception& e) {
      add("fixed-point-limit", false, e.what());
    }
  }

  if (alpha > 0.0 && p.xbar) {
    const Matrix shifted = ba + alpha * Matrix::Identity(n, n);
    Eigen::ColPivHouseholderQR<Matrix> qr(shifted);
    const Vector xs = qr.solve(b * (a * *p.xbar));
    const Vector predicted = alpha * qr.solve(*p.xbar);
    const double defect = ((*p.xbar - xs) - predicted).norm() / p.xbar->norm();
    add("shift-error-identity", defect <= 1e-10, "defect " + short_num(defect));
  }

  if (cond.consensus) {
    try {
      const BoundReport br = perturbation_bound_ba(a, b, p.bbar, p.b - p.bbar);
      add("noise-sensitivity-bound", br.measured_error <= br.absolute_bound * (1.0 + 1e-10),
          "measured " + short_num(br.measured_error) + " <= bound " + short_num(br.absolute_bound));
    } catch (const std::exception& e) {
      add("noise-sensitivity-bound", false, e.what());
    }
  }

  if (alpha > 0.0) {
    const double eps = 1e-4;
    PerturbationSpec ps;
    ps.alpha = alpha;
    ps.e_a = make_unmatched_transpose(a.transpose(), eps, cfg.seed + 11) - a;
    ps.e_at = make_unmatched_transpose(a, eps, cfg.seed + 12) - a.transpose();
    ps.e = add_noise(p.bbar, {eps, cfg.seed + 13}) - p.bbar;
    const BoundReport br = perturbation_bound_shifted(a, ps, p.bbar);
    add("first-order-perturbation-bound", br.measured_error <= br.absolute_bound,
        "measured " + short_num(br.measured_error) + " <= bound " + short_num(br.absolute_bound) +
            " at scale " + short_num(eps));

    IterationConfig ic;
    ic.alpha = alpha;
    ic.omega = bound ? cfg.safety * *bound : 1.0 / std::max(1.0, ba.norm());
    ic.max_iters = 200;
    std::vector<Vector> xs;
    ic.observer = [&](std::size_t, const Vector& x) { xs.push_back(x); };
    shifted_ba_iterate(p.pair, p.b, ic);
    const UnmatchedPair aug = augment(p.pair, alpha);
    IterationConfig ia = ic;
    ia.alpha = 0.0;
    double worst = 0.0;
    std::size_t k = 0;
    ia.observer = [&](std::size_t, const Vector& x) {
      const double s = std::max(xs[k].norm(), std::numeric_limits<double>::min());
      worst = std::max(worst, (x - xs[k]).norm() / s);
      ++k;
    };
    ba_iterate(aug, augment_rhs(p.b, n), ia);
    add("augmented-equivalence", worst <= 1e-12, "max relative difference " + short_num(worst));
  }
  return rep;
}

}  // namespace unmatched
