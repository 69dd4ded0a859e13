#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sqg/error.hpp"
#include "sqg/field.hpp"

namespace sqg {

/// Binary snapshot: "SQGF", version u32, dim u32, n u32, time f64, then row-major
/// little-endian f64 collocation values.
inline constexpr std::uint32_t snapshot_version = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw ConfigError("snapshot: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_snapshot(const std::filesystem::path& path, const SpectralField& f, double time) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("snapshot: cannot open " + path.string() + " for writing");
  os.write("SQGF", 4);
  detail::put_le<std::uint32_t>(os, snapshot_version);
  detail::put_le<std::uint32_t>(os, std::uint32_t(f.grid().dim()));
  detail::put_le<std::uint32_t>(os, std::uint32_t(f.grid().n()));
  detail::put_le<double>(os, time);
  for (double v : f.values()) detail::put_le<double>(os, v);
}

inline std::pair<SpectralField, double> read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("snapshot: cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SQGF", 4) != 0) throw ConfigError("snapshot: bad magic");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != snapshot_version) throw ConfigError("snapshot: unsupported version " + std::to_string(version));
  const int dim = int(detail::get_le<std::uint32_t>(is));
  const int n = int(detail::get_le<std::uint32_t>(is));
  const double time = detail::get_le<double>(is);
  TorusGrid g(dim, n);
  std::vector<double> values(g.size());
  for (auto& v : values) v = detail::get_le<double>(is);
  return {SpectralField::from_values(g, values), time};
}

/// Round-trip exact text form of a double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_norm_csv_header(std::ostream& os) { os << "t,l2,l4,linf,h_half,h1,h3_2,holder\n"; }

inline void write_norm_csv_row(std::ostream& os, const NormReport& r) {
  os << format_double(r.t) << ',' << format_double(r.l2) << ',' << format_double(r.l4) << ','
     << format_double(r.linf) << ',' << format_double(r.h_half) << ',' << format_double(r.h1) << ','
     << format_double(r.h3_2) << ',' << format_double(r.holder) << '\n';
}

}  // namespace sqg
