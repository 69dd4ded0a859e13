#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "sqg/error.hpp"

#ifndef SQG_DATA_DIR
#define SQG_DATA_DIR "data"
#endif

namespace sqg {

/// Calibrated universal constants (versioned key=value file).
///
/// The analysis only asserts that these constants exist; the shipped values come from the
/// calibration corpus run by `sqg calibrate`, each taken with a safety factor of 2 over the
/// smallest value consistent with the corpus.
struct UniversalConstants {
  int version = 0;
  double c0 = 0.0;    ///< L^p decay rate factor
  double eps0 = 0.0;  ///< Hölder exponent budget, α₀ = min{ε₀κ/M_∞, 1/4}
  double eps1 = 0.0;  ///< forced Hölder budget, α_* = min{ε₁κ²/‖f‖_∞, 1/4}
  double c2 = 0.0;    ///< nonlinear lower bound
  double c5 = 0.0;    ///< Hölder envelope ODE
  double c7 = 0.0;
  double c8 = 0.0;
  double c9 = 0.0;
  double c10 = 0.0;
  double c11 = 0.0;         ///< eigenvalue counting, λ_j ≥ √j / c₁₁
  double backward_C = 0.0;  ///< log-convexity budget
};

/// Path of the constants file: $SQG_CONSTANTS if set, else the shipped data/constants.txt.
inline std::filesystem::path constants_path() {
  if (const char* env = std::getenv("SQG_CONSTANTS"); env && *env) return env;
  return std::filesystem::path(SQG_DATA_DIR) / "constants.txt";
}

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (is.get(c)) {
    h ^= std::uint64_t(static_cast<unsigned char>(c));
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline UniversalConstants parse_constants(std::istream& is) {
  UniversalConstants c;
  std::map<std::string, double*> slots{{"c0", &c.c0},   {"eps0", &c.eps0}, {"eps1", &c.eps1},
                                        {"c2", &c.c2},   {"c5", &c.c5},     {"c7", &c.c7},
                                        {"c8", &c.c8},   {"c9", &c.c9},     {"c10", &c.c10},
                                        {"c11", &c.c11}, {"backward_C", &c.backward_C}};
  std::map<std::string, bool> seen;
  std::string line;
  int lineno = 0;
  bool have_version = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("constants: expected key=value", lineno);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(val, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != val.size()) throw ConfigError("constants: malformed number for '" + key + "'", lineno);
    if (key == "version") {
      c.version = int(v);
      have_version = true;
      continue;
    }
    auto it = slots.find(key);
    if (it == slots.end()) throw ConfigError("constants: unknown key '" + key + "'", lineno);
    if (!(v > 0.0)) throw ConfigError("constants: '" + key + "' must be positive", lineno);
    *it->second = v;
    seen[key] = true;
  }
  if (!have_version) throw ConfigError("constants: missing 'version'");
  for (const auto& [key, slot] : slots)
    if (!seen[key]) throw ConfigError("constants: missing '" + key + "'");
  return c;
}

inline UniversalConstants load_constants(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open constants file " + path.string());
  try {
    return parse_constants(is);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline UniversalConstants load_constants() { return load_constants(constants_path()); }

}  // namespace sqg
