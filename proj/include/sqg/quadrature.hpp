#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <vector>

namespace sqg::quad {

/// Gauss–Legendre nodes and weights on [-1, 1].
struct Rule {
  std::vector<double> x, w;
};

/// Full symmetric rule expanded from Boost's half-range tables.
template <unsigned N>
const Rule& gauss_legendre() {
  static const Rule rule = [] {
    using G = boost::math::quadrature::gauss<double, N>;
    const auto& a = G::abscissa();
    const auto& w = G::weights();
    Rule r;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0.0) {
        r.x.push_back(0.0);
        r.w.push_back(w[i]);
      } else {
        r.x.push_back(-a[i]);
        r.w.push_back(w[i]);
        r.x.push_back(a[i]);
        r.w.push_back(w[i]);
      }
    }
    return r;
  }();
  return rule;
}

/// ∫_a^b f over `panels` equal panels.
template <class F>
double integrate(F&& f, double a, double b, int panels = 1, const Rule& rule = gauss_legendre<20>()) {
  const double width = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * width, half = 0.5 * width;
    double s = 0.0;
    for (std::size_t i = 0; i < rule.x.size(); ++i) s += rule.w[i] * f(mid + half * rule.x[i]);
    sum += s * half;
  }
  return sum;
}

}  // namespace sqg::quad
