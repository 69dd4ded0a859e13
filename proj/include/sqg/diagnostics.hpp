#pragma once

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "sqg/constants.hpp"
#include "sqg/error.hpp"
#include "sqg/field.hpp"
#include "sqg/solver.hpp"

namespace sqg {

// ---------------------------------------------------------------------------------------------
// L^p decay and the Hölder exponent budget

/// ‖θ₀‖ e^{-tc₀κ} + ‖f‖ (1 - e^{-tc₀κ}) / (c₀κ).
inline double decay_envelope(LpOrder p, double t, double theta0_norm, double f_norm, double kappa, double c0) {
  if (!p.is_infinite() && !(p.p >= 2.0 && std::fmod(p.p, 2.0) == 0.0))
    throw UnsupportedError("decay_envelope: p must be even or infinity");
  if (!(kappa > 0.0) || !(c0 > 0.0)) throw PreconditionError("decay_envelope: kappa and c0 must be positive");
  if (t < 0.0) throw PreconditionError("decay_envelope: t must be nonnegative");
  const double rate = c0 * kappa;
  const double e = std::exp(-t * rate);
  return theta0_norm * e + f_norm * (-std::expm1(-t * rate)) / rate;
}

struct HolderBudget {
  double alpha0 = 0.0;
  double M_inf = 0.0;
};

/// M_∞ = ‖θ₀‖_∞ + ‖f‖_∞/(c₀κ) and α₀ = min{ε₀κ/M_∞, 1/4}.
inline HolderBudget holder_budget(double theta0_linf, double f_linf, double kappa, const UniversalConstants& c) {
  if (!(kappa > 0.0)) throw PreconditionError("holder_budget: kappa must be positive");
  HolderBudget b;
  b.M_inf = theta0_linf + f_linf / (c.c0 * kappa);
  b.alpha0 = b.M_inf > 0.0 ? std::min(c.eps0 * kappa / b.M_inf, 0.25) : 0.25;
  return b;
}

// ---------------------------------------------------------------------------------------------
// M_α envelope

struct MAlphaEnvelope {
  std::vector<double> t;
  std::vector<double> M;      ///< M_α(t) at the requested times
  double global_bound = 0.0;  ///< max{M₀, c₅M_∞}
  double long_time_bound = 0.0;  ///< 2c₅M_∞
  double t_alpha = 0.0;       ///< printed closed form
  double t_alpha_ode = 0.0;   ///< exact time at which the ODE solution reaches 2c₅M_∞
};

namespace detail {

/// Antiderivative of m/(m³ - 1) on m > 1.
inline double cubic_antiderivative(double m) {
  const double s3 = std::sqrt(3.0);
  return std::log((m - 1.0) * (m - 1.0) / (m * m + m + 1.0)) / 6.0 + std::atan((2.0 * m + 1.0) / s3) / s3;
}

}  // namespace detail

/// t_α as printed: 0 if M₀ ≤ 2c₅M_∞, else (M₀²/(4c₅²M_∞²) - 1)/(7κ).
inline double t_alpha_printed(double M0, double M_inf, double kappa, double c5) {
  if (M0 <= 2.0 * c5 * M_inf) return 0.0;
  return (M0 * M0 / (4.0 * c5 * c5 * M_inf * M_inf) - 1.0) / (7.0 * kappa);
}

/// Exact first time at which the envelope ODE reaches 2c₅M_∞ from above:
/// t = (2/κ)∫₂^{m₀} m dm/(m³ - 1), m₀ = M₀/(c₅M_∞).
inline double t_alpha_exact(double M0, double M_inf, double kappa, double c5) {
  if (M0 <= 2.0 * c5 * M_inf) return 0.0;
  const double m0 = M0 / (c5 * M_inf);
  return 2.0 / kappa * (detail::cubic_antiderivative(m0) - detail::cubic_antiderivative(2.0));
}

/// Integrates d/dt M² + κM³/(c₅M_∞) = c₅²κM_∞², M(0) = M₀ (Dormand–Prince, dense output).
inline MAlphaEnvelope m_alpha_envelope(double M0, double M_inf, double kappa, double c5,
                                       const std::vector<double>& t_grid) {
  if (!(M0 >= 0.0)) throw PreconditionError("m_alpha_envelope: M0 must be nonnegative");
  if (!(M_inf > 0.0) || !(kappa > 0.0) || !(c5 > 0.0))
    throw PreconditionError("m_alpha_envelope: M_inf, kappa and c5 must be positive");
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    if (t_grid[i] < 0.0 || (i > 0 && t_grid[i] < t_grid[i - 1]))
      throw PreconditionError("m_alpha_envelope: time grid must be nonnegative and nondecreasing");
  MAlphaEnvelope env;
  env.t = t_grid;
  env.global_bound = std::max(M0, c5 * M_inf);
  env.long_time_bound = 2.0 * c5 * M_inf;
  env.t_alpha = t_alpha_printed(M0, M_inf, kappa, c5);
  env.t_alpha_ode = t_alpha_exact(M0, M_inf, kappa, c5);
  if (t_grid.empty()) return env;

  using state = std::array<double, 1>;
  const double source = c5 * c5 * kappa * M_inf * M_inf;
  const double damping = kappa / (c5 * M_inf);
  auto rhs = [&](const state& y, state& dy, double) {
    const double m = std::sqrt(std::max(y[0], 0.0));
    dy[0] = source - damping * m * m * m;
  };
  namespace ode = boost::numeric::odeint;
  auto stepper = ode::make_dense_output(1e-13, 1e-13, ode::runge_kutta_dopri5<state>());
  state y{M0 * M0};
  std::vector<double> times;
  times.reserve(t_grid.size() + 1);
  if (t_grid.front() > 0.0) times.push_back(0.0);
  times.insert(times.end(), t_grid.begin(), t_grid.end());
  std::vector<double> out;
  out.reserve(times.size());
  const double dt0 = 1e-3 / (kappa * std::max(1.0, c5 * M_inf));
  ode::integrate_times(stepper, rhs, y, times.begin(), times.end(), dt0,
                       [&](const state& s, double) { out.push_back(std::sqrt(std::max(s[0], 0.0))); });
  if (t_grid.front() > 0.0) out.erase(out.begin());
  env.M = std::move(out);
  return env;
}

// ---------------------------------------------------------------------------------------------
// Hölder tracking

struct HolderSample {
  double t = 0.0;
  double g = 0.0;         ///< [θ(t)]²_{C^α} on the grid
  double bound = 0.0;     ///< M_α(t)²
  std::array<double, 2> argmax_x{}, argmax_h{};
  bool violated = false;
};

struct FalsificationEvent {
  double t = 0.0;
  double g = 0.0;
  double bound = 0.0;
  SpectralField state;
};

struct HolderTrack {
  double alpha = 0.0;
  double alpha0 = 0.0;
  bool applicable = false;  ///< α ≤ α₀: violations count as falsifications
  std::vector<HolderSample> samples;
  std::vector<FalsificationEvent> events;
  std::size_t falsifications() const { return events.size(); }
};

/// Per-snapshot g(t) = sup v² and comparison with M_α(t)², M_α(0) = [θ₀]_{C^α}.
/// `rel_tol` absorbs round-off in the comparison at t = 0 where equality holds.
inline HolderTrack track_holder(const Trajectory& traj, double alpha, const HolderBudget& budget, double kappa,
                                double c5, double rel_tol = 1e-12) {
  if (traj.snapshots.size() != traj.times.size() || traj.snapshots.empty())
    throw PreconditionError("track_holder: trajectory must keep its snapshots");
  HolderTrack tr;
  tr.alpha = alpha;
  tr.alpha0 = budget.alpha0;
  tr.applicable = alpha <= budget.alpha0;
  std::vector<HolderResult> h(traj.snapshots.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = holder_seminorm(traj.snapshots[i], alpha);
  std::vector<double> M(h.size(), 0.0);
  if (budget.M_inf > 0.0) M = m_alpha_envelope(h[0].value, budget.M_inf, kappa, c5, traj.times).M;
  for (std::size_t i = 0; i < h.size(); ++i) {
    HolderSample s;
    s.t = traj.times[i];
    s.g = h[i].value * h[i].value;
    s.bound = M[i] * M[i];
    s.argmax_x = h[i].argmax_x;
    s.argmax_h = h[i].argmax_h;
    s.violated = s.g > s.bound * (1.0 + rel_tol);
    if (s.violated && tr.applicable) tr.events.push_back({s.t, s.g, s.bound, traj.snapshots[i]});
    tr.samples.push_back(s);
  }
  return tr;
}

// ---------------------------------------------------------------------------------------------
// Absorbing-ball constants

/// The closed-form constants of the absorbing-ball argument. Values that overflow a double are
/// reported as +inf; the natural logarithms of the squared radii are always finite for finite
/// inputs up to the point where the exponential in M_{3/2,f}² itself overflows its logarithm.
struct AbsorbingConstants {
  double alpha_star = 0.0;
  double M_inf_f = 0.0;
  double log_M1f_sq = 0.0, log_M32f_sq = 0.0, log_M2f_sq = 0.0;
  double M1f = 0.0, M32f = 0.0, M2f = 0.0;
  /// log log of the squared radii; finite even when the single logarithm overflows
  double log_log_M32f_sq = 0.0, log_log_M2f_sq = 0.0;
  /// M_A = max{M_{3/2,f}, M_{2,f}}
  double log_MA_sq() const { return std::max(log_M32f_sq, log_M2f_sq); }
  double log_log_MA_sq() const { return std::max(log_log_M32f_sq, log_log_M2f_sq); }
};

namespace detail {

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  if (std::isinf(m)) return m;
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

inline double exp_sqrt(double log_sq) { return std::exp(0.5 * log_sq); }

}  // namespace detail

inline AbsorbingConstants absorbing_constants(double f_linf, double f_h1, double kappa, const UniversalConstants& c) {
  if (!(kappa > 0.0)) throw PreconditionError("absorbing_constants: kappa must be positive");
  if (!(f_linf >= 0.0) || !(f_h1 >= 0.0)) throw PreconditionError("absorbing_constants: norms must be nonnegative");
  if (std::isinf(f_linf)) throw DomainError("absorbing_constants: alpha_* = 0 for an unbounded force");
  AbsorbingConstants a;
  a.alpha_star = f_linf > 0.0 ? std::min(c.eps1 * kappa * kappa / f_linf, 0.25) : 0.25;
  a.M_inf_f = 2.0 * f_linf / (c.eps1 * kappa);
  const double as = a.alpha_star;
  using detail::log_add;
  using detail::safe_log;
  // M_{1,f}² = 72‖f‖²_{H¹}/κ² + c₈(8c₇)^{(3-3α)/(2α)} M_{∞,f}^{(9-α)/(4α)} / (3κ^{(9-3α)/(4α)})
  const double t1 = safe_log(72.0 * f_h1 * f_h1 / (kappa * kappa));
  double t2 = -std::numeric_limits<double>::infinity();
  if (a.M_inf_f > 0.0)
    t2 = std::log(c.c8) + (3.0 - 3.0 * as) / (2.0 * as) * std::log(8.0 * c.c7) - std::log(3.0) -
         (9.0 - 3.0 * as) / (4.0 * as) * std::log(kappa) + (9.0 - as) / (4.0 * as) * std::log(a.M_inf_f);
  a.log_M1f_sq = log_add(t1, t2);
  const double M1f_sq = std::exp(a.log_M1f_sq);
  // M_{3/2,f}² = ((6+κ)M_{1,f}²/κ + ‖f‖²_{H¹}/κ) exp(c₉(6+κ)M_{1,f}²/κ²)
  const double pre = log_add(std::log((6.0 + kappa) / kappa) + a.log_M1f_sq, safe_log(f_h1 * f_h1 / kappa));
  a.log_M32f_sq = pre + c.c9 * (6.0 + kappa) / (kappa * kappa) * M1f_sq;
  // M_{2,f}² = 2‖f‖²_{H¹}/κ² + 2c₉M_{3/2,f}⁴/κ²
  a.log_M2f_sq = log_add(safe_log(2.0 * f_h1 * f_h1 / (kappa * kappa)),
                         std::log(2.0 * c.c9 / (kappa * kappa)) + 2.0 * a.log_M32f_sq);
  // doubly logarithmic forms: log M_{3/2,f}² = pre + q·exp(log M_{1,f}²)
  const double q = c.c9 * (6.0 + kappa) / (kappa * kappa);
  if (std::isfinite(a.log_M32f_sq)) {
    a.log_log_M32f_sq = detail::safe_log(a.log_M32f_sq);
  } else {
    a.log_log_M32f_sq = pre > 0.0 ? log_add(std::log(pre), std::log(q) + a.log_M1f_sq) : std::log(q) + a.log_M1f_sq;
  }
  if (std::isfinite(a.log_M2f_sq)) {
    a.log_log_M2f_sq = detail::safe_log(a.log_M2f_sq);
  } else {
    // log M_{2,f}² = 2 log M_{3/2,f}² + log(2c₉/κ²) up to a vanishing relative correction
    a.log_log_M2f_sq = std::log(2.0) + a.log_log_M32f_sq;
  }
  a.M1f = detail::exp_sqrt(a.log_M1f_sq);
  a.M32f = detail::exp_sqrt(a.log_M32f_sq);
  a.M2f = detail::exp_sqrt(a.log_M2f_sq);
  return a;
}

/// (X/r + B) e^A.
inline double uniform_gronwall(double X, double A, double B, double r) {
  if (!(r > 0.0)) throw PreconditionError("uniform_gronwall: r must be positive");
  if (!(X >= 0.0) || !(A >= 0.0) || !(B >= 0.0)) throw PreconditionError("uniform_gronwall: X, A, B must be >= 0");
  return (X / r + B) * std::exp(A);
}

// ---------------------------------------------------------------------------------------------
// H¹ absorption along a trajectory

struct AbsorptionReport {
  bool entered = false;
  double entry_time = 0.0;
  bool stays = false;                 ///< never exits after entry within the horizon
  double max_window_average = 0.0;    ///< max over unit windows after entry of ∫‖θ‖²_{H^{3/2}}
  double window_bound = 0.0;          ///< ((6+κ)/κ) M_{1,f}²
  bool window_ok = true;
};

/// Entry time into {‖θ‖_{H¹} ≤ M_{1,f}} and the unit-window H^{3/2} average after entry
/// (trapezoidal rule on the snapshot times).
inline AbsorptionReport absorption_check(const Trajectory& traj, double log_M1f_sq, double kappa) {
  AbsorptionReport r;
  const double log_h1_bound = 0.5 * log_M1f_sq;
  const std::size_t n = traj.reports.size();
  std::size_t entry = n;
  for (std::size_t i = 0; i < n; ++i)
    if (detail::safe_log(traj.reports[i].h1) <= log_h1_bound) {
      entry = i;
      break;
    }
  if (entry == n) return r;
  r.entered = true;
  r.entry_time = traj.reports[entry].t;
  r.stays = true;
  for (std::size_t i = entry; i < n; ++i)
    if (detail::safe_log(traj.reports[i].h1) > log_h1_bound) r.stays = false;
  const double log_wb = std::log((6.0 + kappa) / kappa) + log_M1f_sq;
  r.window_bound = std::exp(log_wb);
  // cumulative trapezoid of ‖θ‖²_{H^{3/2}}
  std::vector<double> cum(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double a = traj.reports[i - 1].h3_2, b = traj.reports[i].h3_2;
    cum[i] = cum[i - 1] + 0.5 * (a * a + b * b) * (traj.reports[i].t - traj.reports[i - 1].t);
  }
  for (std::size_t i = entry; i < n; ++i) {
    const double t_end = traj.reports[i].t + 1.0;
    std::size_t j = i;
    while (j + 1 < n && traj.reports[j + 1].t <= t_end * (1.0 + 1e-14)) ++j;
    if (traj.reports[j].t < t_end * (1.0 - 1e-14)) break;  // window leaves the horizon
    const double w = cum[j] - cum[i];
    r.max_window_average = std::max(r.max_window_average, w);
    if (detail::safe_log(w) > log_wb) r.window_ok = false;
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// Log-convexity monitor

struct LogConvexitySample {
  double t = 0.0;
  double w = 0.0;
  double budget = 0.0;
  bool violated = false;
};

struct LogConvexityMonitor {
  enum class Status { ok, indistinguishable };
  Status status = Status::ok;
  double m = 0.0;  ///< max ‖θ⁽¹⁾ - θ⁽²⁾‖_{L²} over the window
  std::vector<LogConvexitySample> samples;
  std::size_t violations = 0;
};

/// w(t) = log(2m/‖θ⁽¹⁾-θ⁽²⁾‖_{L²}) against w(0) + C∫₀ᵗ‖θ̄‖²_{H^{3/2}}, θ̄ the average solution.
/// The series ends (status indistinguishable) at the first snapshot where the difference drops
/// to round-off relative to the solutions.
inline LogConvexityMonitor log_convexity_monitor(const Trajectory& a, const Trajectory& b, double C) {
  if (a.snapshots.size() != b.snapshots.size() || a.times != b.times || a.snapshots.size() != a.times.size())
    throw PreconditionError("log_convexity_monitor: trajectories must share snapshot times");
  LogConvexityMonitor mon;
  const std::size_t n = a.times.size();
  std::vector<double> diff(n), avg(n);
  std::size_t usable = n;
  for (std::size_t i = 0; i < n; ++i) {
    SpectralField d = a.snapshots[i];
    d -= b.snapshots[i];
    diff[i] = sobolev_norm(d, 0.0);
    SpectralField s = a.snapshots[i];
    s += b.snapshots[i];
    s *= 0.5;
    avg[i] = sobolev_norm(s, 1.5);
    const double scale = std::max(sobolev_norm(a.snapshots[i], 0.0), sobolev_norm(b.snapshots[i], 0.0));
    if (diff[i] <= 1e-13 * scale || diff[i] == 0.0) {
      usable = i;
      mon.status = LogConvexityMonitor::Status::indistinguishable;
      break;
    }
  }
  if (usable == 0) return mon;
  mon.m = *std::max_element(diff.begin(), diff.begin() + usable);
  const double w0 = std::log(2.0 * mon.m / diff[0]);
  double integral = 0.0;
  for (std::size_t i = 0; i < usable; ++i) {
    if (i > 0) integral += 0.5 * (avg[i - 1] * avg[i - 1] + avg[i] * avg[i]) * (a.times[i] - a.times[i - 1]);
    LogConvexitySample s;
    s.t = a.times[i];
    s.w = std::log(2.0 * mon.m / diff[i]);
    s.budget = w0 + C * integral;
    s.violated = s.w > s.budget + 1e-12 * std::abs(s.budget);
    mon.violations += s.violated;
    mon.samples.push_back(s);
  }
  return mon;
}

// ---------------------------------------------------------------------------------------------
// Envelope CSV

struct EnvelopeRow {
  double t, norm, envelope;
};

/// Columns t,norm,envelope,slack,violated with slack = envelope - norm.
inline void write_envelope_csv(std::FILE* out, const std::vector<EnvelopeRow>& rows) {
  std::fprintf(out, "t,norm,envelope,slack,violated\n");
  for (const auto& r : rows)
    std::fprintf(out, "%.17g,%.17g,%.17g,%.17g,%d\n", r.t, r.norm, r.envelope, r.envelope - r.norm,
                 r.norm > r.envelope ? 1 : 0);
}

}  // namespace sqg
