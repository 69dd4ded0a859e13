#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sqg/error.hpp"
#include "sqg/field.hpp"

namespace sqg {

/// One corpus field: random band field or a single cosine mode on a 2D grid, optionally with an
/// added mean (used to exercise the mean-zero precondition).
struct CorpusEntry {
  std::string id;
  std::string kind = "random";  ///< random | cosine
  int n = 32;
  double band = 4.0;
  std::uint64_t seed = 1;
  double linf = 1.0;
  double decay = 1.0;
  int k1 = 1, k2 = 0;
  double mean = 0.0;

  SpectralField build() const {
    TorusGrid g(2, n);
    SpectralField f = kind == "cosine" ? cosine_mode(g, k1, k2, linf) : random_band_field(g, band, seed, linf, decay);
    f.coeff(0, 0) = mean;
    return f;
  }
};

inline const char* corpus_header() { return "id,kind,n,band,seed,linf,decay,k1,k2,mean"; }

/// CSV with the header above; '#' starts a comment. Errors carry line numbers.
inline std::vector<CorpusEntry> parse_corpus(std::istream& is) {
  std::vector<CorpusEntry> out;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != corpus_header()) throw ConfigError(std::string("corpus: expected header ") + corpus_header(), lineno);
      header = true;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 10) throw ConfigError("corpus: expected 10 columns", lineno);
    CorpusEntry e;
    try {
      e.id = cols[0];
      e.kind = cols[1];
      e.n = std::stoi(cols[2]);
      e.band = std::stod(cols[3]);
      e.seed = std::stoull(cols[4]);
      e.linf = std::stod(cols[5]);
      e.decay = std::stod(cols[6]);
      e.k1 = std::stoi(cols[7]);
      e.k2 = std::stoi(cols[8]);
      e.mean = std::stod(cols[9]);
    } catch (const std::exception&) {
      throw ConfigError("corpus: malformed number", lineno);
    }
    if (e.kind != "random" && e.kind != "cosine") throw ConfigError("corpus: unknown kind '" + e.kind + "'", lineno);
    out.push_back(e);
  }
  return out;
}

inline std::vector<CorpusEntry> load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open corpus " + path);
  return parse_corpus(is);
}

inline void write_corpus(std::ostream& os, const std::vector<CorpusEntry>& entries) {
  os << corpus_header() << "\n";
  for (const auto& e : entries)
    os << e.id << ',' << e.kind << ',' << e.n << ',' << e.band << ',' << e.seed << ',' << e.linf << ',' << e.decay
       << ',' << e.k1 << ',' << e.k2 << ',' << e.mean << "\n";
}

/// The 20-field recipe: bands 2..6 cycling, unit sup norm, decay 1, seeds from seed0.
inline std::vector<CorpusEntry> standard_corpus(std::uint64_t seed0, const std::string& prefix, int n = 32) {
  std::vector<CorpusEntry> out;
  for (int i = 0; i < 20; ++i) {
    CorpusEntry e;
    e.id = prefix + std::to_string(i + 1);
    e.n = n;
    e.band = 2.0 + (i % 5);
    e.seed = seed0 + std::uint64_t(i);
    out.push_back(e);
  }
  return out;
}

}  // namespace sqg
