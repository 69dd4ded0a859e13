#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>
#include <numeric>

#include "json.hpp"
#include "sqg/calibration.hpp"
#include "sqg/config.hpp"
#include "sqg/constants.hpp"
#include "sqg/corpus.hpp"
#include "sqg/diagnostics.hpp"
#include "sqg/kernels.hpp"
#include "sqg/snapshot.hpp"
#include "sqg/solver.hpp"
#include "sqg/tangent.hpp"

namespace sqg {

inline constexpr const char* sqg_version = "0.1.0";

/// Process exit codes.
enum ExitCode : int { exit_ok = 0, exit_falsified = 1, exit_usage = 2, exit_blowup = 3 };

/// Command-line usage error (exit 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// N from the absorbing radii: the log form while log M_A² is representable, else log log.
inline DimensionBound dimension_bound_for(const AbsorbingConstants& a, double kappa, const UniversalConstants& c) {
  const double l = a.log_MA_sq();
  if (!std::isinf(l) || l < 0.0) return dimension_bound(kappa, l, c.c10, c.c11);
  return dimension_bound_loglog(kappa, a.log_log_MA_sq(), c.c10, c.c11);
}

namespace cli {

using nlohmann::json;
namespace fs = std::filesystem;

struct CommandArgs {
  std::string config_path;
  std::string preset;
  fs::path out = "sqg-out";
  std::optional<std::uint64_t> seed_override;
  int threads = 1;
  std::optional<long long> n_max;  ///< dimension: number of tangent directions
  std::string corpus_path;         ///< verify-kernels
  std::ostream* out_stream = &std::cout;
  std::ostream* err_stream = &std::cerr;
};

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Experiment manifest: one per output directory, written before the computation starts and
/// completed afterwards.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command) : dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["version"] = sqg_version;
    j_["started"] = utc_now();
    j_["finished"] = nullptr;
    j_["outputs"] = json::array();
    j_["threads"] = thread_count().load();
    const auto cp = constants_path();
    j_["constants"] = {{"path", cp.string()}, {"hash", fs::exists(cp) ? file_hash(cp) : std::string()}};
  }
  json& data() { return j_; }
  void output(const std::string& name) { j_["outputs"].push_back(name); }
  void write() const {
    fs::create_directories(dir_);
    std::ofstream os(dir_ / "manifest.json");
    os << j_.dump(2) << "\n";
  }
  void finish(int code) {
    j_["finished"] = utc_now();
    j_["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["exit_code"] = code;
    write();
  }

 private:
  fs::path dir_;
  json j_;
  std::chrono::steady_clock::time_point start_;
};

inline bool looks_like_manifest(const std::string& path) {
  std::ifstream is(path);
  char ch = 0;
  while (is.get(ch) && std::isspace(static_cast<unsigned char>(ch))) {
  }
  return ch == '{';
}

/// Config from --config (plain text or a manifest) or --preset, with the seed override applied.
/// Arguments recorded in a manifest fill in those not given on the command line.
inline ExperimentConfig resolve_config(CommandArgs& a, const std::string& command) {
  if (!a.config_path.empty() && !a.preset.empty()) throw UsageError("--config and --preset are mutually exclusive");
  if (a.config_path.empty() && a.preset.empty()) throw UsageError("one of --config or --preset is required");
  ExperimentConfig c;
  if (!a.preset.empty()) {
    c = preset(a.preset);
  } else if (looks_like_manifest(a.config_path)) {
    json j;
    try {
      std::ifstream is(a.config_path);
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError("manifest " + a.config_path + ": " + e.what());
    }
    if (!j.contains("config") || !j.contains("command")) throw ConfigError("manifest lacks 'config' or 'command'");
    if (j["command"].get<std::string>() != command)
      throw UsageError("manifest was written by '" + j["command"].get<std::string>() + "', not '" + command + "'");
    c = parse_config_text(j["config"].get<std::string>());
    if (j.contains("n_max") && !a.n_max) a.n_max = j["n_max"].get<long long>();
  } else {
    c = load_config(a.config_path);
  }
  if (a.seed_override) c.seed = *a.seed_override;
  return c;
}

inline void write_csv_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

inline std::string norms_csv(const Trajectory& traj) {
  std::ostringstream os;
  write_norm_csv_header(os);
  for (const auto& r : traj.reports) write_norm_csv_row(os, r);
  return os.str();
}

inline std::size_t write_envelope(const fs::path& path, const std::vector<EnvelopeRow>& rows) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw ConfigError("cannot write " + path.string());
  write_envelope_csv(fp, rows);
  std::fclose(fp);
  std::size_t v = 0;
  for (const auto& r : rows) v += r.norm > r.envelope * (1.0 + 1e-12) + 1e-300;
  return v;
}

inline void write_holder_csv(const fs::path& path, const std::vector<std::array<double, 3>>& rows) {
  std::ofstream os(path);
  os << "t,g,bound,violated\n";
  for (const auto& r : rows)
    os << format_double(r[0]) << ',' << format_double(r[1]) << ',' << format_double(r[2]) << ','
       << (r[1] > r[2] * (1.0 + 1e-12) ? 1 : 0) << "\n";
}

inline void write_snapshots(const fs::path& dir, const Trajectory& traj, Manifest& m) {
  fs::create_directories(dir / "snapshots");
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "snapshots/snap_%05zu.bin", i);
    write_snapshot(dir / name, traj.snapshots[i], traj.times[i]);
    m.output(name);
  }
}

/// simulate: 2D run, norms and decay envelopes, optional Hölder tracking.
inline int cmd_simulate(CommandArgs a) {
  auto cfg = resolve_config(a, "simulate");
  if (cfg.dim != 2) throw UsageError("simulate needs run.dim = 2; use the burgers command for 1D");
  auto& out = *a.out_stream;
  const auto constants = load_constants();
  const auto theta0 = cfg.initial_field();
  const auto force = cfg.force_field();

  Manifest man(a.out, "simulate");
  man.data()["config"] = to_text(cfg);
  man.data()["seed"] = cfg.seed;
  for (auto name : {"norms.csv", "envelope_l2.csv", "envelope_l4.csv", "envelope_linf.csv"}) man.output(name);
  if (cfg.holder) man.output("holder.csv");
  man.write();

  RunOptions ro;
  ro.snapshot_interval = cfg.snapshot_interval;
  ro.keep_snapshots = cfg.holder || cfg.write_snapshots;
  Trajectory traj;
  try {
    traj = run(theta0, cfg.solver, force, {}, ro);
  } catch (const BlowupError& e) {
    write_snapshot(a.out / "blowup_state.bin", e.last_valid_state(), e.time());
    man.output("blowup_state.bin");
    man.finish(exit_blowup);
    throw;
  }
  write_csv_text(a.out / "norms.csv", norms_csv(traj));

  std::size_t violations = 0;
  const LpOrder orders[] = {LpOrder{2.0}, LpOrder{4.0}, LpOrder::infinity()};
  const char* names[] = {"envelope_l2.csv", "envelope_l4.csv", "envelope_linf.csv"};
  for (int k = 0; k < 3; ++k) {
    const double n0 = calib::lp_of(traj.reports.front(), orders[k]), fn = lp_norm(force, orders[k]);
    std::vector<EnvelopeRow> rows;
    for (const auto& r : traj.reports)
      rows.push_back({r.t, calib::lp_of(r, orders[k]),
                      decay_envelope(orders[k], r.t, n0, fn, cfg.solver.kappa, constants.c0)});
    const auto v = write_envelope(a.out / names[k], rows);
    violations += v;
    if (v) out << "decay envelope violated at " << v << " snapshots (" << names[k] << ")\n";
  }

  if (cfg.holder) {
    const auto budget = holder_budget(traj.reports.front().linf, lp_norm(force, LpOrder::infinity()),
                                      cfg.solver.kappa, constants);
    const double alpha = cfg.holder_alpha.value_or(budget.alpha0);
    const auto tr = track_holder(traj, alpha, budget, cfg.solver.kappa, constants.c5);
    std::vector<std::array<double, 3>> rows;
    for (const auto& s : tr.samples) rows.push_back({s.t, s.g, s.bound});
    write_holder_csv(a.out / "holder.csv", rows);
    out << "holder: alpha = " << format_double(alpha) << ", alpha0 = " << format_double(budget.alpha0)
        << (tr.applicable ? "" : " (alpha > alpha0: violations are not falsifications)")
        << ", falsification events = " << tr.falsifications() << "\n";
    violations += tr.falsifications();
  }
  if (cfg.write_snapshots) write_snapshots(a.out, traj, man);
  out << "simulate: " << traj.steps << " steps to t = " << format_double(traj.times.back()) << ", "
      << traj.times.size() << " snapshots\n";
  const int code = violations ? exit_falsified : exit_ok;
  man.finish(code);
  return code;
}

/// burgers: 1D critical Burgers run; L^∞ monotonicity (unforced) and Hölder tracking.
inline int cmd_burgers(CommandArgs a) {
  auto cfg = resolve_config(a, "burgers");
  if (cfg.dim != 1) throw UsageError("burgers needs run.dim = 1");
  auto& out = *a.out_stream;
  const auto constants = load_constants();
  const auto theta0 = cfg.initial_field();
  const auto force = cfg.force_field();
  const bool unforced = lp_norm(force, LpOrder::infinity()) == 0.0;

  Manifest man(a.out, "burgers");
  man.data()["config"] = to_text(cfg);
  man.data()["seed"] = cfg.seed;
  man.output("norms.csv");
  if (cfg.holder) man.output("holder.csv");
  man.write();

  RunOptions ro;
  ro.snapshot_interval = cfg.snapshot_interval;
  ro.keep_snapshots = cfg.holder || cfg.write_snapshots;
  Trajectory traj;
  try {
    traj = run(theta0, cfg.solver, force, {}, ro);
  } catch (const BlowupError& e) {
    write_snapshot(a.out / "blowup_state.bin", e.last_valid_state(), e.time());
    man.output("blowup_state.bin");
    man.finish(exit_blowup);
    throw;
  }
  write_csv_text(a.out / "norms.csv", norms_csv(traj));

  std::size_t violations = 0;
  if (unforced) {
    std::size_t rises = 0;
    for (std::size_t i = 1; i < traj.reports.size(); ++i)
      rises += traj.reports[i].linf > traj.reports[i - 1].linf * (1.0 + 1e-9) + 1e-300;
    out << "L^inf non-increasing: " << (rises ? "no" : "yes") << " (" << rises << " increases)\n";
    violations += rises;
  }
  if (cfg.holder) {
    // α₀ = min{1/(8C₀B_∞), 1/4} with C₀ the calibrated lower-bound constant and B_∞ = ‖θ₀‖_∞
    const double B = traj.reports.front().linf;
    const double alpha0 = B > 0.0 ? std::min(1.0 / (8.0 * constants.c2 * B), 0.25) : 0.25;
    const double alpha = cfg.holder_alpha.value_or(alpha0);
    std::vector<std::array<double, 3>> rows;
    const double g0 = std::pow(holder_seminorm(traj.snapshots.front(), alpha).value, 2);
    std::size_t events = 0;
    for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
      const double g = std::pow(holder_seminorm(traj.snapshots[i], alpha).value, 2);
      rows.push_back({traj.times[i], g, g0});
      events += g > g0 * (1.0 + 1e-12);
    }
    write_holder_csv(a.out / "holder.csv", rows);
    const bool applicable = unforced && alpha <= alpha0;
    out << "holder: alpha = " << format_double(alpha) << ", alpha0 = " << format_double(alpha0)
        << ", samples above [theta0]^2 = " << events;
    if (!unforced) out << " (forced: comparison constant not calibrated, not applicable)";
    else if (!applicable) out << " (alpha > alpha0: not applicable)";
    out << "\n";
    if (applicable) violations += events;
  }
  if (cfg.write_snapshots) write_snapshots(a.out, traj, man);
  out << "burgers: " << traj.steps << " steps to t = " << format_double(traj.times.back()) << "\n";
  const int code = violations ? exit_falsified : exit_ok;
  man.finish(code);
  return code;
}

/// dimension: relax, co-evolve n_max tangents, compare empirical_N with the bound N.
inline int cmd_dimension(CommandArgs a) {
  auto cfg = resolve_config(a, "dimension");
  if (a.n_max && *a.n_max <= 0) throw UsageError("--n-max must be positive");
  if (cfg.dim != 2) throw UsageError("dimension needs run.dim = 2");
  auto& out = *a.out_stream;
  const auto constants = load_constants();
  const auto theta0 = cfg.initial_field();
  const auto force = cfg.force_field();
  const std::size_t n_max = a.n_max ? std::size_t(*a.n_max) : cfg.ensemble;
  if (n_max == 0) throw UsageError("dimension needs a positive ensemble size");

  Manifest man(a.out, "dimension");
  man.data()["config"] = to_text(cfg);
  man.data()["seed"] = cfg.seed;
  man.data()["n_max"] = n_max;
  for (auto name : {"trace.csv", "volume.csv", "dimension_report.txt"}) man.output(name);
  man.write();

  VolumeTraceOptions opt;
  opt.n = n_max;
  opt.t_end = cfg.trace_time;
  opt.relax_time = cfg.relax_time;
  opt.reorth_every = cfg.reorth_every;
  opt.seed = cfg.seed;
  VolumeTraceResult res;
  try {
    res = volume_and_trace_run(theta0, force, cfg.solver, opt);
  } catch (const BlowupError&) {
    man.finish(exit_blowup);
    throw;
  }
  {
    std::FILE* fp = std::fopen((a.out / "trace.csv").c_str(), "w");
    if (!fp) throw ConfigError("cannot write trace.csv");
    write_trace_csv(fp, res.trace);
    std::fclose(fp);
    std::ofstream vs(a.out / "volume.csv");
    vs << "t,log_volume,trace_integral,defect\n";
    for (std::size_t i = 0; i < res.times.size(); ++i)
      vs << format_double(res.times[i]) << ',' << format_double(res.logV[i]) << ','
         << format_double(res.trace_integral[i]) << ','
         << format_double(res.logV[i] - res.logV.front() - res.trace_integral[i]) << "\n";
  }

  const double kappa = cfg.solver.kappa;
  const auto ac = absorbing_constants(lp_norm(force, LpOrder::infinity()), sobolev_norm(force, 1.0), kappa, constants);
  const auto bound = dimension_bound_for(ac, kappa, constants);

  std::ostringstream rep;
  rep << "dimension report\n"
      << "kappa = " << format_double(kappa) << ", tangents = " << n_max << ", relax = " << format_double(cfg.relax_time)
      << ", averaging horizon = " << format_double(cfg.trace_time) << "\n"
      << "log M_A^2 = " << format_double(ac.log_MA_sq()) << ", log log M_A^2 = " << format_double(ac.log_log_MA_sq())
      << "\n";
  if (!bound.saturated)
    rep << "N = " << bound.N << "\n";
  else
    rep << "N = ceil(x^2) beyond double precision: log N = " << format_double(bound.log_N)
        << ", log log N = " << format_double(bound.log_log_N) << "\n";
  rep << "bound curve at N: "
      << (bound.curve_negative_at_N ? (*bound.curve_negative_at_N ? "negative" : "not negative")
                                    : "undecidable (exact evaluation exceeds the precision cap)")
      << "\n";
  if (res.empirical_N)
    rep << "empirical_N = " << *res.empirical_N << "\n";
  else
    rep << "empirical_N > " << n_max << " (no negative averaged trace among the tracked directions)\n";
  rep << "averages converged: " << (res.converged ? "yes" : "no") << ", reorthonormalizations = "
      << res.reorthonormalizations << " (" << res.early_reorthonormalizations << " early), max Gram condition = "
      << format_double(res.max_condition) << "\n"
      << "volume identity defect at t = " << format_double(res.times.back()) << ": "
      << format_double(res.identity_defect()) << "\n"
      << "m,avg_trace_m,previous_avg_m,converged,bound_curve_m\n";
  for (std::size_t m = 0; m < n_max; ++m)
    rep << m + 1 << ',' << format_double(res.trace.time_avg[m]) << ',' << format_double(res.trace.previous_avg[m])
        << ',' << int(res.trace.converged[m]) << ',' << format_double(bound.curve(double(m + 1))) << "\n";
  write_csv_text(a.out / "dimension_report.txt", rep.str());
  out << rep.str();

  bool falsified = bound.curve_negative_at_N == false;
  if (res.empirical_N)
    falsified |= !bound.dominates(double(*res.empirical_N));
  else
    falsified |= !bound.dominates(double(n_max));
  const int code = falsified ? exit_falsified : exit_ok;
  man.finish(code);
  return code;
}

struct KernelRow {
  std::string check, field, parameter;
  double value, threshold;
  bool pass;
};

/// verify-kernels: pointwise identity, L^p Poincaré and nonlinear lower bound over a corpus.
inline int cmd_verify_kernels(CommandArgs a) {
  auto& out = *a.out_stream;
  const std::string path = a.corpus_path.empty() ? std::string(SQG_DATA_DIR) + "/corpus.csv" : a.corpus_path;
  const auto corpus = load_corpus(path);
  const auto constants = load_constants();
  std::vector<SpectralField> fields;
  for (const auto& e : corpus) {
    fields.push_back(e.build());
    if (!fields.back().is_mean_zero())
      throw PreconditionError("corpus entry '" + e.id + "' does not have zero mean");
  }

  Manifest man(a.out, "verify-kernels");
  man.data()["corpus"] = path;
  man.data()["corpus_hash"] = file_hash(path);
  man.output("kernels.csv");
  man.write();

  std::vector<KernelRow> rows;
  if (corpus.empty()) *a.err_stream << "warning: empty corpus, every check passes vacuously\n";

  {
    TorusGrid g(2, 32);
    const auto c1 = cosine_mode(g, 1, 0, 1.0);
    DissipationEvaluator D(c1, 1.0, {});
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); i += 37) worst = std::max(worst, std::abs(D.at(i) - 1.0));
    rows.push_back({"D1_cos", "cos_x1", "alpha=1", worst, 1e-3, worst <= 1e-3});
  }
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& f = fields[k];
    const double linf = lp_norm(f, LpOrder::infinity());
    std::vector<std::size_t> pts(f.grid().size());
    std::iota(pts.begin(), pts.end(), 0);
    for (double alpha : {0.5, 1.0, 1.5}) {
      const auto r = identity_residuals(f, alpha, pts);
      double mean = 0.0;
      for (double v : r) mean += v;
      mean /= double(r.size());
      const double thr = 1e-2 * linf * linf;
      rows.push_back({"identity", corpus[k].id, "alpha=" + format_double(alpha), mean, thr, mean <= thr});
    }
    for (int p : {4, 8}) {
      const auto pc = lp_poincare_check(f, p, 1.0);
      rows.push_back({"poincare", corpus[k].id, "p=" + std::to_string(p), pc.slack(), 0.0, pc.holds()});
    }
  }
  double overall = std::numeric_limits<double>::infinity();
  const auto shifts = calib::lower_bound_shifts();
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    for (std::size_t s = 0; s < shifts.size(); ++s) {
      const auto lb = nonlinear_lower_bound_check(fields[k], shifts[s], constants.c2);
      if (lb.empty()) continue;
      overall = std::min(overall, lb.min_ratio);
      rows.push_back({"lower_bound", corpus[k].id, "shift=" + std::to_string(s), lb.min_ratio, 1.0, lb.min_ratio >= 1.0});
    }
  }
  if (std::isfinite(overall))
    rows.push_back({"lower_bound_nonvacuous", "all", "min_ratio", overall, 10.0, overall <= 10.0});

  std::ofstream csv(a.out / "kernels.csv");
  csv << "check,field,parameter,value,threshold,pass\n";
  std::size_t failed = 0;
  for (const auto& r : rows) {
    csv << r.check << ',' << r.field << ',' << r.parameter << ',' << format_double(r.value) << ','
        << format_double(r.threshold) << ',' << (r.pass ? 1 : 0) << "\n";
    failed += !r.pass;
  }
  csv.close();
  out << "verify-kernels: " << corpus.size() << " fields, " << rows.size() << " checks, " << failed << " failed\n";
  for (const auto& r : rows)
    if (!r.pass)
      out << "FAIL " << r.check << ' ' << r.field << ' ' << r.parameter << " value " << format_double(r.value)
          << " threshold " << format_double(r.threshold) << "\n";
  const int code = failed ? exit_falsified : exit_ok;
  man.finish(code);
  return code;
}

/// calibrate: re-derives the universal constants into <out>/constants.txt.
inline int cmd_calibrate(CommandArgs a) {
  CalibrationOptions o;
  if (a.seed_override) o.seed0 = *a.seed_override;
  Manifest man(a.out, "calibrate");
  man.data()["seed"] = o.seed0;
  man.output("constants.txt");
  man.output("golden_absorbing.txt");
  man.write();
  const auto rep = calibrate(o, a.err_stream);
  {
    std::ofstream os(a.out / "constants.txt");
    write_constants(os, rep, o);
  }
  const auto ac = absorbing_constants(1.0, 1.0, 1.0, rep.constants);
  std::ofstream g(a.out / "golden_absorbing.txt");
  for (double v : {ac.alpha_star, ac.M_inf_f, ac.log_M1f_sq, ac.log_M32f_sq, ac.log_M2f_sq, ac.log_MA_sq(),
                   ac.log_log_M32f_sq, ac.log_log_MA_sq()})
    g << format_double(v) << "\n";
  *a.out_stream << "calibrate: constants written to " << (a.out / "constants.txt").string() << "\n";
  man.finish(exit_ok);
  return exit_ok;
}

/// Runs a command, mapping exceptions to exit codes and messages on the error stream.
template <class Fn>
int dispatch(Fn&& fn, CommandArgs a) {
  auto& err = *a.err_stream;
  thread_count() = std::max(1, a.threads);
  try {
    return fn(a);
  } catch (const BlowupError& e) {
    err << "blowup: " << e.what() << "\n";
    return exit_blowup;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return exit_blowup;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_usage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return exit_usage;
  } catch (const PreconditionError& e) {
    err << "precondition violated: " << e.what() << "\n";
    return exit_usage;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << "\n";
    return exit_usage;
  } catch (const UnsupportedError& e) {
    err << "unsupported: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "filesystem error: " << e.what() << "\n";
    return exit_usage;
  }
}

}  // namespace cli
}  // namespace sqg
