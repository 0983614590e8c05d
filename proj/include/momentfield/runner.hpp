#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "momentfield/config.hpp"
#include "momentfield/moment_solver.hpp"
#include "momentfield/random_pde.hpp"
#include "momentfield/residuals.hpp"
#include "momentfield/simulate.hpp"

namespace momentfield {

/// Shortest decimal that round-trips the double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// One pass/fail record of the run summary. `kind` says how `computed` is
/// judged: against an absolute/relative tolerance, against se_multiplier
/// standard errors, as a lower bound, or as an exact match.
struct CheckRecord {
  std::string name;
  double computed = 0.0;
  double target = 0.0;
  std::string kind;  // "abs_tol" | "rel_tol" | "se" | "lower_bound" | "upper_bound" | "exact"
  double tolerance = 0.0;
  double std_error = 0.0;
  double se_multiplier = 0.0;
  bool pass = false;

  json to_json() const {
    json j{{"name", name}, {"computed", computed}, {"target", target},
           {"kind", kind}, {"pass", pass}};
    if (kind == "se") {
      j["std_error"] = std_error;
      j["se_multiplier"] = se_multiplier;
    } else if (kind != "exact") {
      j["tolerance"] = tolerance;
    }
    return j;
  }
};

inline CheckRecord check_se(const std::string& name, double computed, double target, double se,
                            double multiplier) {
  CheckRecord c;
  c.name = name;
  c.computed = computed;
  c.target = target;
  c.kind = "se";
  c.std_error = se;
  c.se_multiplier = multiplier;
  c.pass = se > 0.0 ? std::abs(computed - target) <= multiplier * se : computed == target;
  return c;
}

inline CheckRecord check_upper(const std::string& name, double computed, double bound,
                               const std::string& kind = "upper_bound") {
  CheckRecord c;
  c.name = name;
  c.computed = computed;
  c.target = bound;
  c.kind = kind;
  c.tolerance = bound;
  c.pass = computed <= bound;
  return c;
}

inline CheckRecord check_lower(const std::string& name, double computed, double bound) {
  CheckRecord c;
  c.name = name;
  c.computed = computed;
  c.target = bound;
  c.kind = "lower_bound";
  c.tolerance = bound;
  c.pass = computed >= bound;
  return c;
}

inline CheckRecord check_exact(const std::string& name, double computed, double target) {
  CheckRecord c;
  c.name = name;
  c.computed = computed;
  c.target = target;
  c.kind = "exact";
  c.pass = computed == target;
  return c;
}

struct RunSummary {
  std::string command;
  json parameters;
  std::vector<CheckRecord> checks;
  std::map<std::string, double> timings_ms;
  std::vector<std::string> artifacts;
  bool pass = true;

  json to_json() const {
    json jc = json::array();
    for (const auto& c : checks) jc.push_back(c.to_json());
    return json{{"command", command}, {"parameters", parameters}, {"checks", jc},
                {"timings_ms", timings_ms}, {"artifacts", artifacts}, {"pass", pass}};
  }
};

namespace run_detail {

class Stopwatch {
public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

inline void write_field_csv(const std::filesystem::path& path, const MomentField& field,
                            const MomentField* stderr_field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "k,l,i,j,t,tprime,value" << (stderr_field ? ",stderr" : "") << "\n";
  const auto& pairs = field.pairs();
  const TimeGrid& grid = field.grid();
  for (int k = 0; k < field.modes(); ++k)
    for (int l = 0; l < field.modes(); ++l)
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs.pair_at(p);
        out << k << ',' << l << ',' << i << ',' << j << ',' << format_double(grid.node(i)) << ','
            << format_double(grid.node(j)) << ',' << format_double(field.at(k, l, p));
        if (stderr_field) out << ',' << format_double(stderr_field->at(k, l, p));
        out << "\n";
      }
}

inline void write_diag_csv(const std::filesystem::path& path, const MomentField& field,
                           const MomentField* stderr_field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "k,l,i,t,value" << (stderr_field ? ",stderr" : "") << "\n";
  const TimeGrid& grid = field.grid();
  for (int k = 0; k < field.modes(); ++k)
    for (int l = 0; l < field.modes(); ++l)
      for (int i = 0; i < grid.nodes(); ++i) {
        const std::size_t p = field.pairs().index_of(i, i);
        out << k << ',' << l << ',' << i << ',' << format_double(grid.node(i)) << ','
            << format_double(field.at(k, l, p));
        if (stderr_field) out << ',' << format_double(stderr_field->at(k, l, p));
        out << "\n";
      }
}

/// Entrywise MC-vs-deterministic comparison. Entries with zero standard
/// error must agree exactly (both sides are then deterministic).
struct FieldComparison {
  double max_se_gap = 0.0;  // max |dev| / SE over entries with SE > 0
  double fraction_within_3se = 1.0;
  bool zero_se_mismatch = false;
  std::size_t entries = 0;
};

inline FieldComparison compare_fields(const MomentField& det, const MomentEstimate& mc) {
  FieldComparison cmp;
  const auto& pairs = mc.value.pairs();
  std::size_t within3 = 0;
  for (int k = 0; k < det.modes(); ++k)
    for (int l = 0; l < det.modes(); ++l)
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs.pair_at(p);
        const double dev = std::abs(mc.value.at(k, l, p) - det.value(k, l, i, j));
        const double se = mc.std_error.at(k, l, p);
        ++cmp.entries;
        if (se > 0.0) {
          const double gap = dev / se;
          cmp.max_se_gap = std::max(cmp.max_se_gap, gap);
          if (gap <= 3.0) ++within3;
        } else {
          if (dev != 0.0) cmp.zero_se_mismatch = true;
          ++within3;
        }
      }
  cmp.fraction_within_3se =
      cmp.entries == 0 ? 1.0 : static_cast<double>(within3) / static_cast<double>(cmp.entries);
  return cmp;
}

inline std::vector<RunConfig::IsometryPair> default_isometry_pairs(const RunConfig& cfg) {
  const double T = cfg.grid().horizon();
  const int K = cfg.op().modes();
  std::vector<RunConfig::IsometryPair> pairs;
  const Polynomial one = Polynomial::constant(1.0);
  const Polynomial ramp{0.0, 1.0};
  const Polynomial bubble = Polynomial::bubble(T, 1);
  pairs.push_back({{one, 0}, {one, 0}});
  pairs.push_back({{ramp, 0}, {ramp, 0}});
  pairs.push_back({{one, 0}, {ramp, 0}});
  if (K > 1) {
    pairs.push_back({{one, 0}, {one, 1}});
    pairs.push_back({{ramp, 1}, {bubble, 1}});
    pairs.push_back({{bubble, 0}, {ramp, 1}});
  } else {
    pairs.push_back({{bubble, 0}, {bubble, 0}});
    pairs.push_back({{ramp, 0}, {bubble, 0}});
    pairs.push_back({{one, 0}, {bubble, 0}});
  }
  return pairs;
}

// --- report command: re-read emitted CSVs ---------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.header.push_back(cell);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": cannot parse '" + cell + "'");
      }
    }
    if (row.size() != table.header.size())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": expected " + std::to_string(table.header.size()) + " columns");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace run_detail

/// Commands of the batch driver.
enum class Command { Solve, Simulate, Verify, Isometry, RandPde, Report };

inline Command parse_command(const std::string& name) {
  if (name == "solve") return Command::Solve;
  if (name == "simulate") return Command::Simulate;
  if (name == "verify") return Command::Verify;
  if (name == "isometry") return Command::Isometry;
  if (name == "randpde") return Command::RandPde;
  if (name == "report") return Command::Report;
  throw ValidationError("unknown command '" + name +
                        "' (solve|simulate|verify|isometry|randpde|report)");
}

namespace run_detail {

inline void append_field_invariant_checks(std::vector<CheckRecord>& checks,
                                          const MomentField& field, const std::string& suffix) {
  checks.push_back(check_exact("exchange_symmetry_" + suffix, exchange_symmetry_error(field), 0.0));
  checks.push_back(
      check_lower("equal_time_psd_" + suffix, equal_time_min_eig_ratio(field), -kPsdTol));
  // The dense Gram eigenproblem is cubic in K*(N+1); skip it for fields
  // past the point where it would dominate the run.
  if (field.pairs().is_full() &&
      static_cast<std::size_t>(field.modes()) * field.grid().nodes() <= 2048)
    checks.push_back(check_lower("gram_psd_" + suffix, gram_min_eig_ratio(field), -kPsdTol));
}

inline void emit_field(RunSummary& summary, const std::filesystem::path& out_dir,
                       const MomentField& field, const MomentField* se) {
  std::filesystem::create_directories(out_dir);
  write_field_csv(out_dir / "field.csv", field, se);
  write_diag_csv(out_dir / "diag.csv", field, se);
  summary.artifacts.push_back("field.csv");
  summary.artifacts.push_back("diag.csv");
}

inline void run_solve(RunSummary& summary, const RunConfig& cfg,
                      const std::filesystem::path& out_dir) {
  Stopwatch sw;
  SolveOptions opts;
  opts.max_cells = cfg.max_cells();
  opts.extra_pairs = cfg.extra_pairs();
  opts.threads = cfg.mc().threads;
  const MomentField field = solve_second_moment(cfg.op(), cfg.noise(),
                                                cfg.initial().second_moment(), cfg.grid(), opts);
  summary.timings_ms["solve"] = sw.ms();
  append_field_invariant_checks(summary.checks, field, "det");
  emit_field(summary, out_dir, field, nullptr);
}

inline void run_simulate(RunSummary& summary, const RunConfig& cfg,
                         const std::filesystem::path& out_dir) {
  Stopwatch sw;
  SimulateOptions sim;
  sim.max_cells = cfg.max_cells();
  sim.threads = cfg.mc().threads;
  const PathEnsemble ensemble = simulate_paths(cfg.op(), cfg.noise(), cfg.initial(), cfg.grid(),
                                               cfg.mc().samples, cfg.mc().master_seed, sim);
  summary.timings_ms["simulate"] = sw.ms();
  Stopwatch sw2;
  EstimatorOptions est_opts;
  est_opts.max_cells = cfg.max_cells();
  est_opts.extra_pairs = cfg.extra_pairs();
  est_opts.threads = cfg.mc().threads;
  const MomentEstimate est = mc_second_moment(ensemble, est_opts);
  summary.timings_ms["estimate"] = sw2.ms();
  append_field_invariant_checks(summary.checks, est.value, "mc");
  emit_field(summary, out_dir, est.value, &est.std_error);
}

inline void run_verify(RunSummary& summary, const RunConfig& cfg,
                       const std::filesystem::path& out_dir) {
  const auto& tol = cfg.tolerances();

  // Deterministic side: closed-form field and its residual checks.
  Stopwatch sw_solve;
  const MomentEvaluator evaluator(cfg.op(), cfg.initial().second_moment(), cfg.noise().matrix());
  SolveOptions sopts;
  sopts.max_cells = cfg.max_cells();
  sopts.extra_pairs = cfg.extra_pairs();
  sopts.threads = cfg.mc().threads;
  const TimePairSet pair_set =
      choose_pair_set(cfg.op().modes(), cfg.grid(), sopts.max_cells, sopts.extra_pairs);
  const MomentField det =
      evaluator.sample(cfg.grid(), pair_set, FieldProvenance::DeterministicSolve,
                       sopts.threads);
  summary.timings_ms["solve"] = sw_solve.ms();

  Stopwatch sw_residual;
  double worst_residual = 0.0;
  for (const ResidualReport& r :
       variational_residual_basis(evaluator, cfg.grid().horizon(), 3, tol.variational))
    worst_residual = std::max(worst_residual, std::abs(r.residual) / r.scale);
  summary.checks.push_back(
      check_upper("variational_residual_max", worst_residual, tol.variational, "rel_tol"));

  const BoundaryReport boundary = boundary_residual(evaluator, cfg.grid().horizon());
  if (boundary.max_residuals.front() == 0.0) {
    // Axis values vanish identically (zero initial matrix); no order to fit.
    summary.checks.push_back(check_exact("boundary_axis_residual", boundary.max_residuals.back(),
                                         0.0));
  } else {
    double min_order = boundary.observed_orders.front();
    for (double o : boundary.observed_orders) min_order = std::min(min_order, o);
    summary.checks.push_back(check_lower("boundary_residual_order", min_order, tol.boundary_order));
  }
  summary.checks.push_back(check_exact("boundary_initial_value", boundary.initial_error, 0.0));

  const XNormReport xnorm = xnorm_squared(evaluator, cfg.grid().horizon());
  summary.checks.push_back(check_upper("xnorm_bound", xnorm.norm, xnorm.bound));
  summary.timings_ms["residuals"] = sw_residual.ms();

  // Monte Carlo side.
  Stopwatch sw_sim;
  SimulateOptions sim;
  sim.max_cells = cfg.max_cells();
  sim.threads = cfg.mc().threads;
  const PathEnsemble ensemble = simulate_paths(cfg.op(), cfg.noise(), cfg.initial(), cfg.grid(),
                                               cfg.mc().samples, cfg.mc().master_seed, sim);
  summary.timings_ms["simulate"] = sw_sim.ms();

  Stopwatch sw_est;
  EstimatorOptions est_opts;
  est_opts.max_cells = cfg.max_cells();
  est_opts.extra_pairs = cfg.extra_pairs();
  est_opts.threads = cfg.mc().threads;
  const MomentEstimate est = mc_second_moment(ensemble, est_opts);
  summary.timings_ms["estimate"] = sw_est.ms();

  const FieldComparison cmp = compare_fields(det, est);
  summary.checks.push_back(
      check_upper("mc_vs_solver_max_se_gap", cmp.max_se_gap, tol.se_multiplier));
  summary.checks.push_back(check_lower("mc_vs_solver_3se_fraction", cmp.fraction_within_3se, 0.99));
  summary.checks.push_back(
      check_exact("mc_vs_solver_zero_se_entries_equal", cmp.zero_se_mismatch ? 1.0 : 0.0, 0.0));

  if (cfg.initial().kind() == InitialLaw::Kind::Gaussian) {
    // Increment retention is capped; samples are per-stream, so this
    // sub-ensemble reproduces the first paths of the main one.
    SimulateOptions mart_sim = sim;
    mart_sim.keep_increments = true;
    const std::size_t mart_samples = std::min<std::size_t>(cfg.mc().samples, 20'000);
    const PathEnsemble mart_ensemble = simulate_paths(
        cfg.op(), cfg.noise(), cfg.initial(), cfg.grid(), mart_samples, cfg.mc().master_seed,
        mart_sim);
    const MartingaleReport mart =
        martingale_check(mart_ensemble, {Polynomial::bubble(cfg.grid().horizon(), 0), 0});
    summary.checks.push_back(
        check_se("martingale_zero", mart.estimate, 0.0, mart.std_error, tol.se_multiplier));
  }

  append_field_invariant_checks(summary.checks, det, "det");
  append_field_invariant_checks(summary.checks, est.value, "mc");
  emit_field(summary, out_dir, est.value, &est.std_error);
}

inline void run_isometry(RunSummary& summary, const RunConfig& cfg,
                         const std::filesystem::path& out_dir) {
  Stopwatch sw;
  const auto pairs =
      cfg.isometry_pairs().empty() ? default_isometry_pairs(cfg) : cfg.isometry_pairs();
  int index = 0;
  for (const auto& pair : pairs) {
    const IsometryReport rep =
        isometry_check(cfg.op(), cfg.noise(), cfg.grid(), pair.v1, pair.v2, cfg.mc().samples,
                       cfg.mc().master_seed + static_cast<std::uint64_t>(index) * 0x10000,
                       cfg.mc().threads);
    summary.checks.push_back(check_se("isometry_pair_" + std::to_string(index), rep.estimate,
                                      rep.target, rep.std_error,
                                      cfg.tolerances().se_multiplier));
    ++index;
  }
  summary.timings_ms["isometry"] = sw.ms();
  std::filesystem::create_directories(out_dir);
}

inline void run_randpde(RunSummary& summary, const RunConfig& cfg,
                        const std::filesystem::path& out_dir) {
  if (!cfg.random_model())
    throw ValidationError("the randpde command needs a random_pde section in the config");
  const RandomDataModel& model = *cfg.random_model();
  const double se_mult = cfg.tolerances().se_multiplier;

  Stopwatch sw;
  SimulateOptions sim;
  sim.max_cells = cfg.max_cells();
  sim.threads = cfg.mc().threads;
  const PathEnsemble ensemble = simulate_random_paths(cfg.op(), model, cfg.grid(),
                                                      cfg.mc().samples, cfg.mc().master_seed, sim);
  summary.timings_ms["simulate"] = sw.ms();

  EstimatorOptions est_opts;
  est_opts.max_cells = cfg.max_cells();
  est_opts.threads = cfg.mc().threads;

  bool emitted = false;
  if (model.independent && (model.zero_mean_forcing || model.zero_mean_u0)) {
    const MomentField det = solve_random_second_moment(
        cfg.op(), make_second_moment_data(model), cfg.grid(), true, cfg.max_cells());
    const MomentEstimate mc = mc_second_moment(ensemble, est_opts);
    const FieldComparison cmp = compare_fields(det, mc);
    summary.checks.push_back(
        check_upper("random_second_moment_max_se_gap", cmp.max_se_gap, se_mult));
    append_field_invariant_checks(summary.checks, det, "det");
    emit_field(summary, out_dir, det, nullptr);
    emitted = true;
  }
  if (model.independent) {
    const MomentField det_cov = solve_random_covariance(cfg.op(), make_covariance_data(model),
                                                        cfg.grid(), true, cfg.max_cells());
    const MomentEstimate mc_cov = mc_covariance(ensemble, est_opts);
    const FieldComparison cmp = compare_fields(det_cov, mc_cov);
    summary.checks.push_back(check_upper("random_covariance_max_se_gap", cmp.max_se_gap, se_mult));
    if (!emitted) {
      emit_field(summary, out_dir, det_cov, nullptr);
      emitted = true;
    }
    // Under independence the centered cross pairings vanish; the raw ones
    // additionally need a zero-mean flag.
    const double T = cfg.grid().horizon();
    const CrossTermReport cross = cross_term_estimate(
        cfg.op(), model, cfg.grid(), {Polynomial::bubble(T, 0), 0},
        {Polynomial::bubble(T, 1), cfg.op().modes() > 1 ? 1 : 0}, cfg.mc().samples,
        cfg.mc().master_seed + 0xC0FFEE, cfg.mc().threads);
    summary.checks.push_back(check_se("cross_term_centered_forward",
                                      cross.centered_forward_estimate, 0.0,
                                      cross.centered_forward_std_error, se_mult));
    summary.checks.push_back(check_se("cross_term_centered_mirrored",
                                      cross.centered_mirrored_estimate, 0.0,
                                      cross.centered_mirrored_std_error, se_mult));
    if (model.zero_mean_forcing || model.zero_mean_u0) {
      summary.checks.push_back(check_se("cross_term_forward", cross.forward_estimate, 0.0,
                                        cross.forward_std_error, se_mult));
      summary.checks.push_back(check_se("cross_term_mirrored", cross.mirrored_estimate, 0.0,
                                        cross.mirrored_std_error, se_mult));
    }
  }
  if (!emitted)
    throw ValidationError(
        "random_pde model satisfies neither identity hypothesis: need `independent`, plus a "
        "zero-mean flag for the second moment");
}

inline void run_report(RunSummary& summary, const std::filesystem::path& out_dir) {
  const CsvTable field = read_csv(out_dir / "field.csv");
  summary.artifacts.push_back("field.csv");
  summary.checks.push_back(
      check_lower("field_csv_rows", static_cast<double>(field.rows.size()), 1.0));

  // Re-check exchange symmetry from the stored values alone.
  std::map<std::array<int, 4>, double> values;
  for (const auto& row : field.rows)
    values[{static_cast<int>(row[0]), static_cast<int>(row[1]), static_cast<int>(row[2]),
            static_cast<int>(row[3])}] = row[6];
  double sym_err = 0.0;
  for (const auto& [key, v] : values) {
    const auto mirror = values.find({key[1], key[0], key[3], key[2]});
    if (mirror != values.end()) sym_err = std::max(sym_err, std::abs(v - mirror->second));
  }
  summary.checks.push_back(check_exact("exchange_symmetry_csv", sym_err, 0.0));

  const std::filesystem::path diag_path = out_dir / "diag.csv";
  if (std::filesystem::exists(diag_path)) {
    const CsvTable diag = read_csv(diag_path);
    summary.artifacts.push_back("diag.csv");
    double diag_err = 0.0;
    for (const auto& row : diag.rows) {
      const auto it = values.find({static_cast<int>(row[0]), static_cast<int>(row[1]),
                                   static_cast<int>(row[2]), static_cast<int>(row[2])});
      if (it != values.end()) diag_err = std::max(diag_err, std::abs(row[4] - it->second));
    }
    summary.checks.push_back(check_exact("diag_matches_field", diag_err, 0.0));
  }
}

}  // namespace run_detail

/// Executes one command against a validated config, writing
/// field.csv / diag.csv / summary.json under out_dir. The summary's `pass`
/// is the conjunction of its checks; callers map it to the exit status.
inline RunSummary run(Command command, const RunConfig& cfg, const std::string& out_dir) {
  run_detail::Stopwatch total;
  RunSummary summary;
  summary.parameters = cfg.raw();
  const std::filesystem::path out(out_dir);
  switch (command) {
    case Command::Solve:
      summary.command = "solve";
      run_detail::run_solve(summary, cfg, out);
      break;
    case Command::Simulate:
      summary.command = "simulate";
      run_detail::run_simulate(summary, cfg, out);
      break;
    case Command::Verify:
      summary.command = "verify";
      run_detail::run_verify(summary, cfg, out);
      break;
    case Command::Isometry:
      summary.command = "isometry";
      run_detail::run_isometry(summary, cfg, out);
      break;
    case Command::RandPde:
      summary.command = "randpde";
      run_detail::run_randpde(summary, cfg, out);
      break;
    case Command::Report:
      summary.command = "report";
      run_detail::run_report(summary, out);
      break;
  }
  summary.pass = true;
  for (const auto& c : summary.checks) summary.pass = summary.pass && c.pass;
  summary.timings_ms["total"] = total.ms();

  std::filesystem::create_directories(out);
  std::ofstream js(out / "summary.json", std::ios::binary);
  if (!js) throw Error("cannot write summary.json");
  js << summary.to_json().dump(2) << "\n";
  summary.artifacts.push_back("summary.json");
  return summary;
}

}  // namespace momentfield
