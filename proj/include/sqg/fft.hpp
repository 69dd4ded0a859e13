#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "sqg/grid.hpp"

namespace sqg::fft {

using cplx = std::complex<double>;

namespace detail {

// FFTW planning is not thread-safe; execution with fftw_execute_dft is.
inline fftw_plan plan_for(const TorusGrid& grid, int sign) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto key = std::make_tuple(grid.dim(), grid.n(), sign);
  if (auto it = plans.find(key); it != plans.end()) return it->second;
  std::vector<cplx> scratch(grid.size());
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan p = grid.dim() == 1 ? fftw_plan_dft_1d(grid.n(), buf, buf, sign, flags)
                                : fftw_plan_dft_2d(grid.n(), grid.n(), buf, buf, sign, flags);
  plans.emplace(key, p);
  return p;
}

}  // namespace detail

/// In-place forward transform, normalized so that data becomes φ̂_k with φ(x) = Σ φ̂_k e^{ik·x}.
inline void forward(const TorusGrid& grid, std::span<cplx> data) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(detail::plan_for(grid, FFTW_FORWARD), buf, buf);
  const double scale = 1.0 / double(grid.size());
  for (auto& c : data) c *= scale;
}

/// In-place inverse transform (coefficients to collocation values), unnormalized synthesis.
inline void inverse(const TorusGrid& grid, std::span<cplx> data) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(detail::plan_for(grid, FFTW_BACKWARD), buf, buf);
}

}  // namespace sqg::fft
