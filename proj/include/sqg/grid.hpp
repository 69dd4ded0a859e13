#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "sqg/error.hpp"

namespace sqg {

/// Uniform collocation grid on the torus [-π,π]^dim, dim ∈ {1,2}.
///
/// Collocation points are x_j = 2πj/n, j = 0..n-1 (the same torus, periodically identified).
/// Flat storage is row-major with the x₁ index slowest: idx = j1*n + j2. Wavenumbers follow the
/// standard FFT ordering: index i ↦ k = i for i ≤ n/2, k = i - n otherwise.
class TorusGrid {
 public:
  TorusGrid() = default;
  TorusGrid(int dim, int n) : dim_(dim), n_(n) {
    if (dim != 1 && dim != 2) throw UnsupportedError("TorusGrid: dim must be 1 or 2");
    if (n < 8 || (n & (n - 1)) != 0) {
      throw PreconditionError("TorusGrid: n must be a power of two >= 8, got " + std::to_string(n));
    }
  }

  int dim() const noexcept { return dim_; }
  int n() const noexcept { return n_; }
  std::size_t size() const noexcept { return dim_ == 1 ? std::size_t(n_) : std::size_t(n_) * n_; }
  double spacing() const noexcept { return 2.0 * std::numbers::pi / n_; }
  /// Volume of one collocation cell, h^dim.
  double cell_volume() const noexcept { return std::pow(spacing(), dim_); }
  /// |T^dim| = (2π)^dim.
  double volume() const noexcept { return std::pow(2.0 * std::numbers::pi, dim_); }

  int wavenumber(int i) const noexcept { return i <= n_ / 2 ? i : i - n_; }
  bool is_nyquist(int i) const noexcept { return i == n_ / 2; }

  /// Wavevector of flat index idx (second component 0 in 1D).
  std::array<int, 2> wavevector(std::size_t idx) const noexcept {
    if (dim_ == 1) return {wavenumber(int(idx)), 0};
    return {wavenumber(int(idx / n_)), wavenumber(int(idx % n_))};
  }
  double kabs(std::size_t idx) const noexcept {
    auto k = wavevector(idx);
    return std::sqrt(double(k[0]) * k[0] + double(k[1]) * k[1]);
  }
  bool touches_nyquist(std::size_t idx) const noexcept {
    if (dim_ == 1) return is_nyquist(int(idx));
    return is_nyquist(int(idx / n_)) || is_nyquist(int(idx % n_));
  }
  /// Flat index of wavevector k (components reduced mod n).
  std::size_t index_of(int k1, int k2 = 0) const noexcept {
    auto wrap = [this](int k) { return ((k % n_) + n_) % n_; };
    if (dim_ == 1) return std::size_t(wrap(k1));
    return std::size_t(wrap(k1)) * n_ + std::size_t(wrap(k2));
  }
  /// Physical coordinates of collocation point idx.
  std::array<double, 2> point(std::size_t idx) const noexcept {
    const double h = spacing();
    if (dim_ == 1) return {h * double(idx), 0.0};
    return {h * double(idx / n_), h * double(idx % n_)};
  }

  friend bool operator==(const TorusGrid&, const TorusGrid&) = default;

 private:
  int dim_ = 2;
  int n_ = 8;
};

}  // namespace sqg
