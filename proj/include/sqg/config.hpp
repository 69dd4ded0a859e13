#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sqg/error.hpp"
#include "sqg/field.hpp"
#include "sqg/snapshot.hpp"
#include "sqg/solver.hpp"

namespace sqg {

/// Initial datum description.
struct InitialSpec {
  enum class Kind { zero, cosine, random_band, file };
  Kind kind = Kind::zero;
  int k1 = 1, k2 = 0;
  double amplitude = 1.0;  ///< cosine: amplitude; random_band: ‖θ₀‖_∞
  double band = 4.0;
  double decay = 1.0;
  std::uint64_t seed = 1;
  std::string path;

  SpectralField build(const TorusGrid& g) const {
    switch (kind) {
      case Kind::zero:
        return SpectralField(g);
      case Kind::cosine:
        return cosine_mode(g, k1, g.dim() == 2 ? k2 : 0, amplitude);
      case Kind::random_band: {
        auto f = random_band_field(g, band, seed, amplitude, decay);
        dealias_two_thirds(f);
        return f;
      }
      case Kind::file: {
        auto [f, t] = read_snapshot(path);
        (void)t;
        if (!(f.grid() == g)) throw PreconditionError("initial: grid of " + path + " does not match the run grid");
        return f;
      }
    }
    return SpectralField(g);
  }
};

inline const char* to_string(InitialSpec::Kind k) {
  switch (k) {
    case InitialSpec::Kind::zero: return "zero";
    case InitialSpec::Kind::cosine: return "cosine";
    case InitialSpec::Kind::random_band: return "random_band";
    case InitialSpec::Kind::file: return "file";
  }
  return "?";
}

/// Everything one command needs; flat key=value text with [sections].
struct ExperimentConfig {
  // [run]
  int dim = 2;
  int n = 32;
  SolverConfig solver;
  double snapshot_interval = 0.1;
  bool write_snapshots = false;
  std::uint64_t seed = 1;  ///< offset added to every random seed (see --seed-override)
  // [initial], [force]
  InitialSpec initial;
  ForceSpec force;
  // [holder]
  bool holder = false;
  std::optional<double> holder_alpha;  ///< empty: use α₀ from the budget
  // [dimension]
  double relax_time = 5.0;
  std::size_t ensemble = 6;
  double trace_time = 10.0;
  int reorth_every = 20;
  // [corpus]
  std::string corpus_path;

  TorusGrid grid() const { return TorusGrid(dim, n); }
  SpectralField initial_field() const {
    InitialSpec s = initial;
    s.seed += seed - 1;
    return s.build(grid());
  }
  SpectralField force_field() const {
    ForceSpec s = force;
    s.seed += seed - 1;
    auto f = s.build(grid());
    if (force.kind == ForceSpec::Kind::random_band) dealias_two_thirds(f);
    return f;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

inline double parse_real(const std::string& v, int line, const std::string& key) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "': expected a number, got '" + v + "'", line);
  }
  if (pos != v.size()) throw ConfigError("'" + key + "': expected a number, got '" + v + "'", line);
  return d;
}

inline long long parse_int(const std::string& v, int line, const std::string& key) {
  const double d = parse_real(v, line, key);
  if (d != std::floor(d)) throw ConfigError("'" + key + "': expected an integer, got '" + v + "'", line);
  return static_cast<long long>(d);
}

inline bool parse_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + v + "'", line);
}

}  // namespace detail

/// Parses the config text. Errors carry the 1-based line number.
inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig c;
  using Setter = std::function<void(const std::string&, int, const std::string&)>;
  auto real = [](double& slot) -> Setter {
    return [&slot](const std::string& v, int l, const std::string& k) { slot = detail::parse_real(v, l, k); };
  };
  auto integer = [](auto& slot) -> Setter {
    return [&slot](const std::string& v, int l, const std::string& k) {
      const auto x = detail::parse_int(v, l, k);
      using T = std::remove_reference_t<decltype(slot)>;
      if (std::is_unsigned_v<T> && x < 0) throw ConfigError("'" + k + "': must be nonnegative", l);
      slot = static_cast<T>(x);
    };
  };
  auto boolean = [](bool& slot) -> Setter {
    return [&slot](const std::string& v, int l, const std::string& k) { slot = detail::parse_bool(v, l, k); };
  };
  auto text = [](std::string& slot) -> Setter {
    return [&slot](const std::string& v, int, const std::string&) { slot = v; };
  };

  std::map<std::string, Setter> keys{
      {"run.dim", integer(c.dim)},
      {"run.n", integer(c.n)},
      {"run.kappa", real(c.solver.kappa)},
      {"run.dt", real(c.solver.dt)},
      {"run.t_end", real(c.solver.t_end)},
      {"run.epsilon", real(c.solver.epsilon)},
      {"run.mollifier_width", real(c.solver.mollifier_width)},
      {"run.cfl", real(c.solver.cfl)},
      {"run.adaptive", boolean(c.solver.adaptive)},
      {"run.snapshot_interval", real(c.snapshot_interval)},
      {"run.write_snapshots", boolean(c.write_snapshots)},
      {"run.seed", integer(c.seed)},
      {"run.integrator",
       [&](const std::string& v, int l, const std::string& k) {
         if (v == "imex-cn") c.solver.integrator = Integrator::imex_cn;
         else if (v == "etdrk2") c.solver.integrator = Integrator::etdrk2;
         else throw ConfigError("'" + k + "': expected imex-cn or etdrk2, got '" + v + "'", l);
       }},
      {"run.dealias",
       [&](const std::string& v, int l, const std::string& k) {
         if (v == "two-thirds") c.solver.dealias = Dealias::two_thirds;
         else if (v == "none") c.solver.dealias = Dealias::none;
         else throw ConfigError("'" + k + "': expected two-thirds or none, got '" + v + "'", l);
       }},
      {"initial.kind",
       [&](const std::string& v, int l, const std::string& k) {
         if (v == "zero") c.initial.kind = InitialSpec::Kind::zero;
         else if (v == "cosine") c.initial.kind = InitialSpec::Kind::cosine;
         else if (v == "random_band") c.initial.kind = InitialSpec::Kind::random_band;
         else if (v == "file") c.initial.kind = InitialSpec::Kind::file;
         else throw ConfigError("'" + k + "': unknown kind '" + v + "'", l);
       }},
      {"initial.k1", integer(c.initial.k1)},
      {"initial.k2", integer(c.initial.k2)},
      {"initial.amplitude", real(c.initial.amplitude)},
      {"initial.band", real(c.initial.band)},
      {"initial.decay", real(c.initial.decay)},
      {"initial.seed", integer(c.initial.seed)},
      {"initial.path", text(c.initial.path)},
      {"force.kind",
       [&](const std::string& v, int l, const std::string& k) {
         if (v == "zero") c.force.kind = ForceSpec::Kind::zero;
         else if (v == "single_mode") c.force.kind = ForceSpec::Kind::single_mode;
         else if (v == "random_band") c.force.kind = ForceSpec::Kind::random_band;
         else if (v == "file") c.force.kind = ForceSpec::Kind::file;
         else throw ConfigError("'" + k + "': unknown kind '" + v + "'", l);
       }},
      {"force.k1", integer(c.force.k1)},
      {"force.k2", integer(c.force.k2)},
      {"force.amplitude", real(c.force.amplitude)},
      {"force.band", real(c.force.band)},
      {"force.seed", integer(c.force.seed)},
      {"force.path", text(c.force.path)},
      {"holder.enabled", boolean(c.holder)},
      {"holder.alpha",
       [&](const std::string& v, int l, const std::string& k) {
         if (v == "alpha0") c.holder_alpha.reset();
         else c.holder_alpha = detail::parse_real(v, l, k);
       }},
      {"dimension.relax_time", real(c.relax_time)},
      {"dimension.ensemble", integer(c.ensemble)},
      {"dimension.trace_time", real(c.trace_time)},
      {"dimension.reorth_every", integer(c.reorth_every)},
      {"corpus.path", text(c.corpus_path)},
  };

  std::string section, line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", lineno);
      section = detail::trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"run", "initial", "force", "holder", "dimension", "corpus"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known))
        throw ConfigError("unknown section [" + section + "]", lineno);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", lineno);
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("key '" + key + "' outside of a section", lineno);
    const auto full = section + "." + key;
    auto it = keys.find(full);
    if (it == keys.end()) throw ConfigError("unknown key '" + full + "'", lineno);
    if (value.empty()) throw ConfigError("empty value for '" + full + "'", lineno);
    it->second(value, lineno, full);
  }
  if (c.dim != 1 && c.dim != 2) throw ConfigError("run.dim must be 1 or 2");
  try {
    TorusGrid(c.dim, c.n);
    c.solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(c.snapshot_interval > 0.0)) throw ConfigError("run.snapshot_interval must be positive");
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  return parse_config(is);
}

/// Canonical text form; parse_config_text(to_text(c)) reproduces c exactly.
inline std::string to_text(const ExperimentConfig& c) {
  std::ostringstream os;
  auto d = [](double v) { return format_double(v); };
  os << "[run]\n"
     << "dim = " << c.dim << "\n"
     << "n = " << c.n << "\n"
     << "kappa = " << d(c.solver.kappa) << "\n"
     << "dt = " << d(c.solver.dt) << "\n"
     << "t_end = " << d(c.solver.t_end) << "\n"
     << "integrator = " << to_string(c.solver.integrator) << "\n"
     << "dealias = " << to_string(c.solver.dealias) << "\n"
     << "epsilon = " << d(c.solver.epsilon) << "\n"
     << "mollifier_width = " << d(c.solver.mollifier_width) << "\n"
     << "cfl = " << d(c.solver.cfl) << "\n"
     << "adaptive = " << (c.solver.adaptive ? "true" : "false") << "\n"
     << "snapshot_interval = " << d(c.snapshot_interval) << "\n"
     << "write_snapshots = " << (c.write_snapshots ? "true" : "false") << "\n"
     << "seed = " << c.seed << "\n"
     << "\n[initial]\n"
     << "kind = " << to_string(c.initial.kind) << "\n"
     << "k1 = " << c.initial.k1 << "\n"
     << "k2 = " << c.initial.k2 << "\n"
     << "amplitude = " << d(c.initial.amplitude) << "\n"
     << "band = " << d(c.initial.band) << "\n"
     << "decay = " << d(c.initial.decay) << "\n"
     << "seed = " << c.initial.seed << "\n";
  if (!c.initial.path.empty()) os << "path = " << c.initial.path << "\n";
  os << "\n[force]\n"
     << "kind = " << to_string(c.force.kind) << "\n"
     << "k1 = " << c.force.k1 << "\n"
     << "k2 = " << c.force.k2 << "\n"
     << "amplitude = " << d(c.force.amplitude) << "\n"
     << "band = " << d(c.force.band) << "\n"
     << "seed = " << c.force.seed << "\n";
  if (!c.force.path.empty()) os << "path = " << c.force.path << "\n";
  os << "\n[holder]\n"
     << "enabled = " << (c.holder ? "true" : "false") << "\n"
     << "alpha = " << (c.holder_alpha ? d(*c.holder_alpha) : std::string("alpha0")) << "\n"
     << "\n[dimension]\n"
     << "relax_time = " << d(c.relax_time) << "\n"
     << "ensemble = " << c.ensemble << "\n"
     << "trace_time = " << d(c.trace_time) << "\n"
     << "reorth_every = " << c.reorth_every << "\n";
  if (!c.corpus_path.empty()) os << "\n[corpus]\npath = " << c.corpus_path << "\n";
  return os.str();
}

/// Shipped scenarios.
inline std::vector<std::string> preset_names() {
  return {"exact-decay", "steady-state", "holder-corpus", "dimension-sweep", "burgers-basic"};
}

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "exact-decay") {
    // θ₀ = cos x₁, f = 0: θ = e^{-κt} cos x₁
    c.n = 64;
    c.solver.dt = 1e-3;
    c.solver.t_end = 1.0;
    c.initial.kind = InitialSpec::Kind::cosine;
  } else if (name == "steady-state") {
    // f = κ cos x₁, θ₀ = cos x₁ is stationary
    c.n = 32;
    c.solver.dt = 1e-2;
    c.solver.t_end = 10.0;
    c.snapshot_interval = 1.0;
    c.initial.kind = InitialSpec::Kind::cosine;
    c.force.kind = ForceSpec::Kind::single_mode;
    c.force.k1 = 1;
    c.force.k2 = 0;
    c.force.amplitude = c.solver.kappa;
  } else if (name == "holder-corpus") {
    c.n = 32;
    c.solver.dt = 1e-2;
    c.solver.t_end = 10.0;
    c.initial.kind = InitialSpec::Kind::random_band;
    c.initial.band = 4.0;
    c.initial.seed = 11;
    c.force.kind = ForceSpec::Kind::random_band;
    c.force.band = 3.0;
    c.force.amplitude = 1.0;
    c.force.seed = 21;
    c.holder = true;
  } else if (name == "dimension-sweep") {
    c.n = 32;
    c.solver.dt = 5e-3;
    c.solver.t_end = 0.0;
    c.initial.kind = InitialSpec::Kind::random_band;
    c.initial.seed = 31;
    c.force.kind = ForceSpec::Kind::random_band;
    c.force.band = 3.0;
    c.force.amplitude = 2.0;
    c.force.seed = 41;
    c.relax_time = 5.0;
    c.ensemble = 6;
    c.trace_time = 10.0;
  } else if (name == "burgers-basic") {
    c.dim = 1;
    c.n = 256;
    c.solver.dt = 1e-3;
    c.solver.t_end = 2.0;
    c.initial.kind = InitialSpec::Kind::cosine;
    c.holder = true;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

}  // namespace sqg
