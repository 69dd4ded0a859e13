#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "sqg/error.hpp"
#include "sqg/fft.hpp"
#include "sqg/grid.hpp"
#include "sqg/parallel.hpp"

namespace sqg {

using cplx = std::complex<double>;

/// Real scalar field on the torus, stored as Fourier coefficients φ̂_k with
/// φ(x) = Σ_k φ̂_k e^{ik·x}.
///
/// Normalization: coefficients are the grid DFT divided by n^dim, so ‖φ‖²_{L²} = (2π)^dim Σ|φ̂_k|²
/// (Parseval). Every norm in this library is stated relative to this convention.
///
/// Nyquist modes (any component equal to n/2) are zero by construction. Fields are normally
/// mean-zero; a nonzero mean can be represented so that preconditions can be checked, and
/// `mean()` exposes it.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(TorusGrid grid) : grid_(grid), coeffs_(grid.size(), cplx{}) {}

  /// Takes coefficients in FFT ordering; Nyquist modes are zeroed.
  SpectralField(TorusGrid grid, std::vector<cplx> coeffs) : grid_(grid), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != grid_.size()) throw PreconditionError("SpectralField: coefficient count mismatch");
    zero_nyquist();
  }

  /// Forward transform of real collocation values (layout as in TorusGrid).
  static SpectralField from_values(TorusGrid grid, std::span<const double> values) {
    if (values.size() != grid.size()) throw PreconditionError("SpectralField: value count mismatch");
    std::vector<cplx> data(values.begin(), values.end());
    fft::forward(grid, data);
    return SpectralField(grid, std::move(data));
  }

  template <class F>
  static SpectralField sample(TorusGrid grid, F&& f) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto x = grid.point(i);
      v[i] = f(x[0], x[1]);
    }
    return from_values(grid, v);
  }

  const TorusGrid& grid() const noexcept { return grid_; }
  std::span<const cplx> coeffs() const noexcept { return coeffs_; }
  std::span<cplx> coeffs() noexcept { return coeffs_; }
  cplx coeff(int k1, int k2 = 0) const { return coeffs_[grid_.index_of(k1, k2)]; }
  cplx& coeff(int k1, int k2 = 0) { return coeffs_[grid_.index_of(k1, k2)]; }

  /// Spatial mean (the k = 0 coefficient).
  double mean() const noexcept { return coeffs_.empty() ? 0.0 : coeffs_[0].real(); }
  bool is_mean_zero(double rel_tol = 1e-12) const noexcept {
    double scale = 0.0;
    for (const auto& c : coeffs_) scale = std::max(scale, std::abs(c));
    return std::abs(coeffs_.empty() ? cplx{} : coeffs_[0]) <= rel_tol * std::max(scale, 1e-300);
  }
  void project_mean_zero() noexcept {
    if (!coeffs_.empty()) coeffs_[0] = 0.0;
  }

  /// Collocation values (inverse transform, real part).
  std::vector<double> values() const {
    std::vector<cplx> data(coeffs_);
    fft::inverse(grid_, data);
    std::vector<double> v(data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = data[i].real();
    return v;
  }

  bool all_finite() const noexcept {
    return std::all_of(coeffs_.begin(), coeffs_.end(),
                       [](const cplx& c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); });
  }

  SpectralField& operator+=(const SpectralField& o) {
    check_same(o);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    check_same(o);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
  }
  SpectralField& operator*=(double a) noexcept {
    for (auto& c : coeffs_) c *= a;
    return *this;
  }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
  friend SpectralField operator*(SpectralField a, double s) { return a *= s; }

  /// a += s·b
  void axpy(double s, const SpectralField& b) {
    check_same(b);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += s * b.coeffs_[i];
  }

  void check_same(const SpectralField& o) const {
    if (!(grid_ == o.grid_)) throw PreconditionError("SpectralField: grid mismatch");
  }

 private:
  void zero_nyquist() noexcept {
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
      if (grid_.touches_nyquist(i)) coeffs_[i] = 0.0;
  }

  TorusGrid grid_;
  std::vector<cplx> coeffs_;
};

// ---------------------------------------------------------------------------------------------
// Fourier multipliers

/// Applies symbol(k1, k2) coefficient-wise.
template <class Symbol>
SpectralField apply_multiplier(const SpectralField& f, Symbol&& symbol) {
  SpectralField out = f;
  const auto& g = f.grid();
  auto c = out.coeffs();
  for (std::size_t i = 0; i < c.size(); ++i) {
    auto k = g.wavevector(i);
    c[i] *= symbol(k[0], k[1]);
  }
  return out;
}

/// Λ^s: multiplier |k|^s on k ≠ 0, zero at k = 0.
inline SpectralField fractional_laplacian(const SpectralField& f, double s) {
  if (s < -2.0 || s > 3.0) throw DomainError("fractional_laplacian: s must lie in [-2, 3]");
  if (s < 0.0 && !f.is_mean_zero()) {
    throw DomainError("fractional_laplacian: negative power of Λ applied to a field with nonzero mean");
  }
  return apply_multiplier(f, [s](int k1, int k2) -> cplx {
    if (k1 == 0 && k2 == 0) return 0.0;
    return std::pow(double(k1) * k1 + double(k2) * k2, 0.5 * s);
  });
}

/// ∂/∂x_axis (axis 0 = x₁).
inline SpectralField partial(const SpectralField& f, int axis) {
  if (axis >= f.grid().dim()) throw PreconditionError("partial: axis out of range");
  return apply_multiplier(f, [axis](int k1, int k2) { return cplx(0.0, axis == 0 ? k1 : k2); });
}

/// u = R^⊥θ = (-R₂θ, R₁θ) with R_j ↔ i k_j/|k|.
inline std::pair<SpectralField, SpectralField> riesz_perp(const SpectralField& theta) {
  if (theta.grid().dim() != 2) throw UnsupportedError("riesz_perp: only defined in 2D");
  auto kinv = [](int k1, int k2) { return k1 == 0 && k2 == 0 ? 0.0 : 1.0 / std::hypot(double(k1), double(k2)); };
  auto u1 = apply_multiplier(theta, [&](int k1, int k2) { return cplx(0.0, -k2 * kinv(k1, k2)); });
  auto u2 = apply_multiplier(theta, [&](int k1, int k2) { return cplx(0.0, k1 * kinv(k1, k2)); });
  return {std::move(u1), std::move(u2)};
}

/// Largest retained |k_i| under the 2/3 rule.
inline int dealias_cutoff(const TorusGrid& g) { return (g.n() - 1) / 3; }

/// Zeros every mode with some |k_i| > (n-1)/3.
inline void dealias_two_thirds(SpectralField& f) {
  const int kc = dealias_cutoff(f.grid());
  const auto& g = f.grid();
  auto c = f.coeffs();
  for (std::size_t i = 0; i < c.size(); ++i) {
    auto k = g.wavevector(i);
    if (std::abs(k[0]) > kc || std::abs(k[1]) > kc) c[i] = 0.0;
  }
}

/// Exact band-limited resampling onto a grid of resolution n_new (zero padding / truncation).
inline SpectralField resample(const SpectralField& f, int n_new) {
  TorusGrid g2(f.grid().dim(), n_new);
  SpectralField out(g2);
  const auto& g = f.grid();
  const int kmax = std::min(g.n(), n_new) / 2 - 1;
  auto src = f.coeffs();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto k = g.wavevector(i);
    if (std::abs(k[0]) > kmax || std::abs(k[1]) > kmax) continue;
    out.coeffs()[g2.index_of(k[0], k[1])] = src[i];
  }
  return out;
}

/// Pointwise product computed on the collocation grid (no dealiasing).
inline SpectralField multiply(const SpectralField& a, const SpectralField& b) {
  a.check_same(b);
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) va[i] *= vb[i];
  return SpectralField::from_values(a.grid(), va);
}

/// Spectral evaluation at an arbitrary point.
inline double evaluate(const SpectralField& f, double x1, double x2 = 0.0) {
  const auto& g = f.grid();
  auto c = f.coeffs();
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] == cplx{}) continue;
    auto k = g.wavevector(i);
    const double phase = k[0] * x1 + k[1] * x2;
    sum += c[i].real() * std::cos(phase) - c[i].imag() * std::sin(phase);
  }
  return sum;
}

// ---------------------------------------------------------------------------------------------
// Inner products and norms

/// Real inner product Σ_k |k|^{2s} Re(f̂_k conj ĝ_k) · (2π)^dim, k ≠ 0.
inline double sobolev_inner(const SpectralField& f, const SpectralField& g, double s) {
  f.check_same(g);
  const auto& grid = f.grid();
  auto a = f.coeffs();
  auto b = g.coeffs();
  double sum = 0.0;
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (a[i] == cplx{} || b[i] == cplx{}) continue;
    const double k2 = grid.kabs(i) * grid.kabs(i);
    const double w = s == 0.0 ? 1.0 : (s == 1.0 ? k2 : std::pow(k2, s));
    sum += w * (a[i].real() * b[i].real() + a[i].imag() * b[i].imag());
  }
  return sum * grid.volume();
}

/// Homogeneous H¹ inner product ⟨f,g⟩ = Σ|k|² f̂_k conj(ĝ_k) (2π)^dim = ∫(-Δf) g.
inline double h1_inner(const SpectralField& f, const SpectralField& g) { return sobolev_inner(f, g, 1.0); }

/// ‖φ‖_{H^s} = ‖Λ^s φ‖_{L²}.
inline double sobolev_norm(const SpectralField& f, double s) { return std::sqrt(sobolev_inner(f, f, s)); }

/// Order of an L^p norm: an even integer ≥ 2 or infinity.
struct LpOrder {
  double p;
  static LpOrder infinity() { return {std::numeric_limits<double>::infinity()}; }
  bool is_infinite() const { return std::isinf(p); }
};

/// Collocation (trapezoidal) L^p norm; max |φ| over the collocation points for p = ∞.
inline double lp_norm_values(const TorusGrid& grid, std::span<const double> v, LpOrder order) {
  if (order.is_infinite()) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  const double p = order.p;
  if (!(p >= 2.0) || std::floor(p) != p || int(p) % 2 != 0) {
    throw UnsupportedError("lp_norm: p must be an even integer >= 2 or infinity");
  }
  const int ip = int(p);
  double sum = 0.0;
  for (double x : v) {
    double x2 = x * x, acc = 1.0;
    for (int e = 0; e < ip / 2; ++e) acc *= x2;
    sum += acc;
  }
  return std::pow(sum * grid.cell_volume(), 1.0 / p);
}

inline double lp_norm(const SpectralField& f, LpOrder order) {
  auto v = f.values();
  return lp_norm_values(f.grid(), v, order);
}
inline double lp_norm(const SpectralField& f, double p) { return lp_norm(f, LpOrder{p}); }

// ---------------------------------------------------------------------------------------------
// Hölder seminorm over a discrete shift lattice

/// Set of nonzero grid shifts m (integer multiples of the spacing). The torus distance of a shift
/// uses the canonical representative with components in (-n/2, n/2].
class ShiftSet {
 public:
  ShiftSet() = default;
  explicit ShiftSet(std::vector<std::array<int, 2>> shifts) : shifts_(std::move(shifts)) {}

  /// All nonzero shifts modulo ±: for each pair {m, -m} one representative is kept, since
  /// |θ(x+h)-θ(x)| and |θ(x-h)-θ(x)| have the same sup over x.
  static ShiftSet all(const TorusGrid& g) {
    std::vector<std::array<int, 2>> s;
    const int n = g.n();
    if (g.dim() == 1) {
      for (int m = 1; m <= n / 2; ++m) s.push_back({m, 0});
    } else {
      for (int m1 = 0; m1 <= n / 2; ++m1)
        for (int m2 = -n / 2 + 1; m2 <= n / 2; ++m2) {
          if (m1 == 0 && m2 <= 0) continue;
          s.push_back({m1, m2});
        }
    }
    return ShiftSet(std::move(s));
  }
  /// Shifts with canonical |m|_∞ ≤ radius.
  static ShiftSet up_to(const TorusGrid& g, int radius) {
    std::vector<std::array<int, 2>> s;
    for (auto m : all(g).shifts_)
      if (std::abs(m[0]) <= radius && std::abs(m[1]) <= radius) s.push_back(m);
    return ShiftSet(std::move(s));
  }

  const std::vector<std::array<int, 2>>& shifts() const noexcept { return shifts_; }
  bool empty() const noexcept { return shifts_.empty(); }

 private:
  std::vector<std::array<int, 2>> shifts_;
};

struct HolderResult {
  double value = 0.0;
  std::array<double, 2> argmax_x{};  ///< x̄
  std::array<double, 2> argmax_h{};  ///< h̄ (canonical representative)
};

/// Canonical torus length of an integer shift.
inline double shift_length(const TorusGrid& g, std::array<int, 2> m) {
  auto canon = [n = g.n()](int a) {
    a = ((a % n) + n) % n;
    return a > n / 2 ? a - n : a;
  };
  return g.spacing() * std::hypot(double(canon(m[0])), double(canon(m[1])));
}

/// max over (x, h) of |θ(x+h) - θ(x)| / |h|^α on the collocation grid and the given shifts.
inline HolderResult holder_seminorm_values(const TorusGrid& g, std::span<const double> v, double alpha,
                                           const ShiftSet& shifts) {
  if (shifts.empty()) throw PreconditionError("holder_seminorm: empty shift set");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("holder_seminorm: alpha must lie in (0, 1]");
  const int n = g.n();
  const auto& list = shifts.shifts();
  struct Best {
    double diff = -1.0;
    std::size_t x = 0;
  };
  std::vector<Best> best(list.size());
  parallel_for(list.size(), [&](std::size_t s) {
    const auto m = list[s];
    Best b;
    if (g.dim() == 1) {
      const int m1 = ((m[0] % n) + n) % n;
      for (int j = 0; j < n; ++j) {
        const double d = std::abs(v[(j + m1) % n] - v[j]);
        if (d > b.diff) b = {d, std::size_t(j)};
      }
    } else {
      const int m1 = ((m[0] % n) + n) % n, m2 = ((m[1] % n) + n) % n;
      for (int j1 = 0; j1 < n; ++j1) {
        const double* row = &v[std::size_t(j1) * n];
        const double* srow = &v[std::size_t((j1 + m1) % n) * n];
        for (int j2 = 0; j2 < n; ++j2) {
          const int s2 = j2 + m2 < n ? j2 + m2 : j2 + m2 - n;
          const double d = std::abs(srow[s2] - row[j2]);
          if (d > b.diff) b = {d, std::size_t(j1) * n + j2};
        }
      }
    }
    best[s] = b;
  });
  HolderResult r;
  double top = -1.0;
  for (std::size_t s = 0; s < list.size(); ++s) {
    const double len = shift_length(g, list[s]);
    if (len == 0.0) continue;
    const double val = best[s].diff / std::pow(len, alpha);
    if (val > top) {
      top = val;
      r.value = val;
      r.argmax_x = g.point(best[s].x);
      auto canon = [n](int a) {
        a = ((a % n) + n) % n;
        return a > n / 2 ? a - n : a;
      };
      r.argmax_h = {g.spacing() * canon(list[s][0]), g.spacing() * canon(list[s][1])};
    }
  }
  r.value = std::max(r.value, 0.0);
  return r;
}

inline HolderResult holder_seminorm(const SpectralField& f, double alpha, const ShiftSet& shifts) {
  auto v = f.values();
  return holder_seminorm_values(f.grid(), v, alpha, shifts);
}
inline HolderResult holder_seminorm(const SpectralField& f, double alpha) {
  return holder_seminorm(f, alpha, ShiftSet::all(f.grid()));
}

// ---------------------------------------------------------------------------------------------
// Norm reports

/// Fixed set of norms recorded along trajectories.
struct NormReport {
  double t = 0.0;
  double l2 = 0.0;
  double l4 = 0.0;
  double linf = 0.0;
  double h_half = 0.0;
  double h1 = 0.0;
  double h3_2 = 0.0;
  double holder = 0.0;  ///< [θ]_{C^α} for the configured α, or 0 when not tracked
};

inline NormReport norm_report(const SpectralField& f, double t, std::optional<double> holder_alpha = {}) {
  auto v = f.values();
  NormReport r;
  r.t = t;
  r.l2 = sobolev_norm(f, 0.0);
  r.l4 = lp_norm_values(f.grid(), v, LpOrder{4});
  r.linf = lp_norm_values(f.grid(), v, LpOrder::infinity());
  r.h_half = sobolev_norm(f, 0.5);
  r.h1 = sobolev_norm(f, 1.0);
  r.h3_2 = sobolev_norm(f, 1.5);
  if (holder_alpha) r.holder = holder_seminorm_values(f.grid(), v, *holder_alpha, ShiftSet::all(f.grid())).value;
  return r;
}

// ---------------------------------------------------------------------------------------------
// Deterministic field generators

/// Random real mean-zero field with modes 0 < |k| ≤ band (Euclidean), coefficient amplitude
/// decaying like |k|^{-decay}, rescaled so that the collocation maximum equals linf.
inline SpectralField random_band_field(const TorusGrid& g, double band, std::uint64_t seed, double linf,
                                       double decay = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SpectralField f(g);
  const int kb = int(std::floor(band));
  const int kc = g.n() / 2 - 1;
  for (int k1 = -kb; k1 <= kb; ++k1) {
    for (int k2 = (g.dim() == 2 ? -kb : 0); k2 <= (g.dim() == 2 ? kb : 0); ++k2) {
      // half-space representative; the conjugate partner is filled by symmetry
      if (k1 < 0 || (k1 == 0 && k2 <= 0)) continue;
      const double kk = std::hypot(double(k1), double(k2));
      if (kk > band || std::abs(k1) > kc || std::abs(k2) > kc) continue;
      const double a = normal(rng), b = normal(rng);
      const cplx c = cplx(a, b) * std::pow(kk, -decay);
      f.coeff(k1, k2) = c;
      f.coeff(-k1, -k2) = std::conj(c);
    }
  }
  const double m = lp_norm(f, LpOrder::infinity());
  if (m > 0.0) f *= linf / m;
  return f;
}

/// amplitude · cos(k·x).
inline SpectralField cosine_mode(const TorusGrid& g, int k1, int k2, double amplitude) {
  SpectralField f(g);
  if (k1 == 0 && k2 == 0) return f;
  f.coeff(k1, k2) += 0.5 * amplitude;
  f.coeff(-k1, -k2) += 0.5 * amplitude;
  return f;
}

}  // namespace sqg
