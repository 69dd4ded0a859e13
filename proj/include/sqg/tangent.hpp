#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <mpfr.h>

#include "sqg/error.hpp"
#include "sqg/field.hpp"
#include "sqg/parallel.hpp"
#include "sqg/solver.hpp"

namespace sqg {

// ---------------------------------------------------------------------------------------------
// Linearization

/// Derivative of nonlinear_term at θ in direction ξ: -R^⊥θ·∇ξ - R^⊥ξ·∇θ, with the same
/// input/output filtering as the nonlinear term, so it is its exact linearization.
inline SpectralField linearized_nonlinear(const SpectralField& theta, const SpectralField& xi,
                                          Dealias dealias = Dealias::two_thirds) {
  theta.check_same(xi);
  if (theta.grid().dim() != 2) throw UnsupportedError("linearized_nonlinear: requires dim = 2");
  SpectralField th = theta, x = xi;
  detail::filter(th, dealias);
  detail::filter(x, dealias);
  auto [ut1, ut2] = riesz_perp(th);
  auto [ux1, ux2] = riesz_perp(x);
  const auto a1 = ut1.values(), a2 = ut2.values(), b1 = ux1.values(), b2 = ux2.values();
  const auto gx1 = partial(x, 0).values(), gx2 = partial(x, 1).values();
  const auto gt1 = partial(th, 0).values(), gt2 = partial(th, 1).values();
  std::vector<double> prod(a1.size());
  for (std::size_t i = 0; i < prod.size(); ++i)
    prod[i] = -(a1[i] * gx1[i] + a2[i] * gx2[i]) - (b1[i] * gt1[i] + b2[i] * gt2[i]);
  auto out = SpectralField::from_values(theta.grid(), prod);
  detail::filter(out, dealias);
  out.project_mean_zero();
  return out;
}

/// A_θ[ξ] = -κΛξ - R^⊥θ·∇ξ - R^⊥ξ·∇θ.
inline SpectralField linearized_rhs(const SpectralField& theta, const SpectralField& xi, double kappa,
                                    Dealias dealias = Dealias::two_thirds) {
  if (!theta.is_mean_zero() || !xi.is_mean_zero())
    throw PreconditionError("linearized_rhs: fields must have zero mean");
  auto out = linearized_nonlinear(theta, xi, dealias);
  out.axpy(-kappa, fractional_laplacian(xi, 1.0));
  return out;
}

/// Advances ξ across the base step θ → detail.next taken by `stepper` with size dt. The update
/// is the exact derivative of the discrete step map, so tangents and finite differences of the
/// base solver agree to second order in the perturbation.
inline SpectralField tangent_step(const Stepper& stepper, const SpectralField& theta, const Stepper::Detail& base,
                                  const SpectralField& xi, double dt) {
  const auto dealias = stepper.config().dealias;
  const auto dn0 = linearized_nonlinear(theta, xi, dealias);
  const auto x = xi.coeffs();
  const auto d0 = dn0.coeffs();
  const auto& g = stepper.grid();
  SpectralField stage(g), next(g);
  auto st = stage.coeffs();
  auto nx = next.coeffs();
  if (stepper.config().integrator == Integrator::imex_cn) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = 0.5 * dt * stepper.symbol(i);
      st[i] = ((1.0 + z) * x[i] + dt * d0[i]) / (1.0 - z);
    }
    const auto dn1 = linearized_nonlinear(base.stage, stage, dealias);
    const auto d1 = dn1.coeffs();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = 0.5 * dt * stepper.symbol(i);
      nx[i] = ((1.0 + z) * x[i] + 0.5 * dt * (d0[i] + d1[i])) / (1.0 - z);
    }
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = dt * stepper.symbol(i);
      st[i] = std::exp(z) * x[i] + dt * Stepper::phi1(z) * d0[i];
    }
    const auto dn1 = linearized_nonlinear(base.stage, stage, dealias);
    const auto d1 = dn1.coeffs();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = dt * stepper.symbol(i);
      nx[i] = st[i] + dt * Stepper::phi2(z) * (d1[i] - d0[i]);
    }
  }
  next.project_mean_zero();
  return next;
}

/// Tangent fields carried along a base trajectory.
struct TangentEnsemble {
  std::vector<SpectralField> xis;
  double t = 0.0;
  double logV = 0.0;            ///< log-volume accumulated at re-orthonormalizations
  double trace_integral = 0.0;  ///< ∫Tr(P_n A_θ) ds
};

/// One synchronized step of base state and ensemble. Tangents advance independently
/// (parallel map) against the read-only base detail.
inline void advance(const Stepper& stepper, SpectralField& theta, std::vector<SpectralField>& xis, double dt) {
  if (theta.grid().dim() != 2) throw UnsupportedError("tangent dynamics requires dim = 2");
  auto base = stepper.step_detailed(theta, dt);
  if (!base.next.all_finite()) throw BlowupError("base blowup during tangent run", theta, 0.0);
  std::vector<SpectralField> out(xis.size());
  parallel_for(xis.size(), [&](std::size_t j) { out[j] = tangent_step(stepper, theta, base, xis[j], dt); });
  xis = std::move(out);
  theta = std::move(base.next);
}

// ---------------------------------------------------------------------------------------------
// Frames

/// H¹ Gram matrix G_ij = ⟨ξ_i, ξ_j⟩_{H¹}.
inline Eigen::MatrixXd h1_gram(const std::vector<SpectralField>& xis) {
  const auto n = Eigen::Index(xis.size());
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) G(i, j) = G(j, i) = h1_inner(xis[i], xis[j]);
  return G;
}

/// Spectral condition number of the H¹ Gram matrix (∞ when singular, 1 for an empty set).
inline double gram_condition(const std::vector<SpectralField>& xis) {
  if (xis.empty()) return 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h1_gram(xis), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

class RankDeficientError : public NumericalError {
 public:
  RankDeficientError(const std::string& msg, std::size_t index) : NumericalError(msg), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

struct GramSchmidtResult {
  std::vector<SpectralField> frame;
  std::vector<double> diag;  ///< R_jj
  double log_increment = 0.0;
};

/// Modified Gram–Schmidt in ⟨f,g⟩_{H¹} = (2π)^d Σ|k|² f̂_k conj(ĝ_k).
inline GramSchmidtResult h1_gram_schmidt(const std::vector<SpectralField>& xis, double max_condition = 1e12) {
  GramSchmidtResult r;
  r.frame = xis;
  for (std::size_t j = 0; j < r.frame.size(); ++j) {
    const double before = sobolev_norm(r.frame[j], 1.0);
    for (std::size_t i = 0; i < j; ++i) r.frame[j].axpy(-h1_inner(r.frame[j], r.frame[i]), r.frame[i]);
    const double nrm = sobolev_norm(r.frame[j], 1.0);
    if (!(nrm > 1e-13 * before) || !(nrm > 0.0) || !std::isfinite(nrm))
      throw RankDeficientError("h1_gram_schmidt: rank deficient at index " + std::to_string(j), j);
    r.frame[j] *= 1.0 / nrm;
    r.diag.push_back(nrm);
    r.log_increment += std::log(nrm);
  }
  if (const double c = gram_condition(xis); c > max_condition) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "h1_gram_schmidt: Gram condition %.3g exceeds %.3g", c, max_condition);
    throw PreconditionError(buf);
  }
  return r;
}

/// Tr(P_m A_θ) for m = 1..n over an H¹-orthonormal frame (prefix sums).
inline std::vector<double> trace_prefix(const SpectralField& theta, const std::vector<SpectralField>& frame,
                                        double kappa, Dealias dealias = Dealias::two_thirds) {
  std::vector<double> terms(frame.size());
  parallel_for(frame.size(), [&](std::size_t j) {
    terms[j] = h1_inner(frame[j], linearized_rhs(theta, frame[j], kappa, dealias));
  });
  std::vector<double> out(frame.size());
  std::partial_sum(terms.begin(), terms.end(), out.begin());
  return out;
}

/// Tr(P_n A_θ) = Σ_j ∫(-Δφ_j) A_θ[φ_j] dx.
inline double trace_Pn_A(const SpectralField& theta, const std::vector<SpectralField>& frame, double kappa,
                         Dealias dealias = Dealias::two_thirds) {
  auto p = trace_prefix(theta, frame, kappa, dealias);
  return p.empty() ? 0.0 : p.back();
}

// ---------------------------------------------------------------------------------------------
// Volume and trace

struct TraceSample {
  double t;
  std::vector<double> trace;  ///< trace[m-1] = Tr(P_m A_θ)
};

struct TraceLog {
  std::vector<TraceSample> samples;
  std::vector<double> time_avg;       ///< average over the second half of the run, per m
  std::vector<double> previous_avg;   ///< same over the preceding window of half the length
  std::vector<char> converged;        ///< relative change ≤ tolerance
};

struct VolumeTraceOptions {
  std::size_t n = 1;
  double t_end = 1.0;
  double relax_time = 0.0;
  int reorth_every = 20;
  double cond_trigger = 1e6;
  double cond_collapse = 1e12;
  double cauchy_tol = 0.05;
  double band = 4.0;          ///< initial tangents: random band fields
  std::uint64_t seed = 1;
};

struct VolumeTraceResult {
  TraceLog trace;
  std::vector<double> times;           ///< measured from the end of relaxation
  std::vector<double> logV;            ///< log V_n(t)
  std::vector<double> trace_integral;  ///< ∫₀^t Tr(P_n A_θ) ds (trapezoid over steps)
  std::optional<std::size_t> empirical_N;
  bool converged = false;  ///< averages up to empirical_N (or all) passed the Cauchy check
  std::size_t steps = 0;
  std::size_t reorthonormalizations = 0;
  std::size_t early_reorthonormalizations = 0;
  double max_condition = 1.0;
  SpectralField final_theta;

  double identity_defect() const { return logV.back() - logV.front() - trace_integral.back(); }
};

namespace detail {

/// Trapezoid average of samples[·].trace[m] over [a, b].
inline double window_average(const std::vector<TraceSample>& s, std::size_t m, double a, double b) {
  double acc = 0.0, len = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double lo = std::max(a, s[i - 1].t), hi = std::min(b, s[i].t);
    if (hi <= lo) continue;
    const double span = s[i].t - s[i - 1].t;
    auto at = [&](double t) {
      const double w = (t - s[i - 1].t) / span;
      return (1.0 - w) * s[i - 1].trace[m] + w * s[i].trace[m];
    };
    acc += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    len += hi - lo;
  }
  return len > 0.0 ? acc / len : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Co-evolves base and n tangents for t_end after relaxing the base for relax_time.
inline VolumeTraceResult volume_and_trace_run(const SpectralField& theta0, const SpectralField& force,
                                              const SolverConfig& config, const VolumeTraceOptions& opt) {
  if (opt.n < 1) throw PreconditionError("volume_and_trace_run: ensemble size must be at least 1");
  if (!(opt.t_end > 0.0)) throw PreconditionError("volume_and_trace_run: t_end must be positive");
  if (opt.reorth_every < 1) throw PreconditionError("volume_and_trace_run: reorth_every must be at least 1");
  if (!theta0.is_mean_zero()) throw PreconditionError("volume_and_trace_run: initial data must have zero mean");
  const auto& g = theta0.grid();
  if (g.dim() != 2) throw UnsupportedError("volume_and_trace_run: requires dim = 2");

  SpectralField theta = theta0;
  theta.project_mean_zero();
  if (opt.relax_time > 0.0) {
    SolverConfig rc = config;
    rc.t_end = opt.relax_time;
    RunOptions ro;
    ro.snapshot_interval = opt.relax_time;
    ro.keep_snapshots = true;
    theta = run(theta, rc, force, {}, ro).snapshots.back();
  }

  Stepper stepper(g, config, force);
  const double kappa = config.kappa;
  std::vector<SpectralField> xis;
  for (std::size_t j = 0; j < opt.n; ++j) xis.push_back(random_band_field(g, opt.band, opt.seed + 7919 * j, 1.0));

  VolumeTraceResult res;
  auto gs = h1_gram_schmidt(xis, opt.cond_collapse);
  double logV_acc = gs.log_increment;
  xis = gs.frame;
  auto record = [&](double t, const GramSchmidtResult& frame, double current_log) {
    res.times.push_back(t);
    res.logV.push_back(logV_acc + current_log);
    res.trace.samples.push_back({t, trace_prefix(theta, frame.frame, kappa, config.dealias)});
    const double tr = res.trace.samples.back().trace.back();
    if (res.trace_integral.empty()) {
      res.trace_integral.push_back(0.0);
    } else {
      const auto& prev = res.trace.samples[res.trace.samples.size() - 2];
      res.trace_integral.push_back(res.trace_integral.back() + 0.5 * (t - prev.t) * (tr + prev.trace.back()));
    }
  };
  record(0.0, gs, 0.0);

  double t = 0.0;
  int since = 0;
  while (t < opt.t_end) {
    double dt = config.dt;
    if (config.adaptive) dt = std::min(dt, stepper.cfl_dt(theta));
    if (t + dt >= opt.t_end * (1.0 - 1e-14)) dt = opt.t_end - t;
    advance(stepper, theta, xis, dt);
    t = (t + dt >= opt.t_end * (1.0 - 1e-14)) ? opt.t_end : t + dt;
    ++res.steps;
    ++since;
    const double cond = gram_condition(xis);
    res.max_condition = std::max(res.max_condition, cond);
    if (!(cond <= opt.cond_collapse))
      throw NumericalError("volume_and_trace_run: tangent ensemble collapsed (Gram condition " + std::to_string(cond) +
                           "); use a smaller re-orthonormalization interval");
    auto frame = h1_gram_schmidt(xis, opt.cond_collapse);
    const bool early = cond > opt.cond_trigger && since < opt.reorth_every;
    if (since >= opt.reorth_every || early) {
      logV_acc += frame.log_increment;
      xis = frame.frame;
      since = 0;
      ++res.reorthonormalizations;
      if (early) ++res.early_reorthonormalizations;
      record(t, frame, 0.0);
    } else {
      record(t, frame, frame.log_increment);
    }
  }

  const double T = opt.t_end;
  auto& tl = res.trace;
  for (std::size_t m = 0; m < opt.n; ++m) {
    const double cur = detail::window_average(tl.samples, m, 0.5 * T, T);
    const double prev = detail::window_average(tl.samples, m, 0.25 * T, 0.5 * T);
    tl.time_avg.push_back(cur);
    tl.previous_avg.push_back(prev);
    tl.converged.push_back(std::abs(cur - prev) <= opt.cauchy_tol * std::max(std::abs(cur), 1e-300));
  }
  for (std::size_t m = 0; m < opt.n; ++m) {
    if (tl.time_avg[m] < 0.0) {
      res.empirical_N = m + 1;
      break;
    }
  }
  const std::size_t upto = res.empirical_N ? *res.empirical_N : opt.n;
  res.converged = std::all_of(tl.converged.begin(), tl.converged.begin() + upto, [](char c) { return c != 0; });
  res.final_theta = theta;
  return res;
}

/// Trace log CSV: t,m,trace_m,running_avg_m.
inline void write_trace_csv(std::FILE* out, const TraceLog& log) {
  std::fprintf(out, "t,m,trace_m,running_avg_m\n");
  if (log.samples.empty()) return;
  const std::size_t n = log.samples.front().trace.size();
  std::vector<double> integral(n, 0.0);
  for (std::size_t i = 0; i < log.samples.size(); ++i) {
    const auto& s = log.samples[i];
    for (std::size_t m = 0; m < n; ++m) {
      if (i > 0) {
        const auto& p = log.samples[i - 1];
        integral[m] += 0.5 * (s.t - p.t) * (s.trace[m] + p.trace[m]);
      }
      const double avg = s.t > 0.0 ? integral[m] / (s.t - log.samples.front().t) : s.trace[m];
      std::fprintf(out, "%.17g,%zu,%.17g,%.17g\n", s.t, m + 1, s.trace[m], avg);
    }
  }
}

// ---------------------------------------------------------------------------------------------
// Dimension bound

/// λ_1 ≤ λ_2 ≤ … : the first `count` values of |k|² over Z²∖{0}, with multiplicity.
inline std::vector<std::int64_t> lattice_eigenvalues_sq(std::size_t count) {
  std::int64_t R = 1;
  while (true) {
    std::vector<std::int64_t> v;
    for (std::int64_t a = -R; a <= R; ++a)
      for (std::int64_t b = -R; b <= R; ++b)
        if ((a != 0 || b != 0) && a * a + b * b <= R * R) v.push_back(a * a + b * b);
    if (v.size() >= count) {
      std::sort(v.begin(), v.end());
      v.resize(count);
      return v;
    }
    R *= 2;
  }
}

/// Minimal c with λ_j ≥ √j / c for j = 1..count: c = max_j √(j/|k_j|²).
inline double c11_from_lattice(std::size_t count = 10000) {
  const auto v = lattice_eigenvalues_sq(count);
  std::size_t best_j = 1;
  std::int64_t best_k = v[0];
  for (std::size_t j = 1; j <= v.size(); ++j) {
    // j/v > best_j/best_k, in integers
    if (std::int64_t(j) * best_k > std::int64_t(best_j) * v[j - 1]) {
      best_j = j;
      best_k = v[j - 1];
    }
  }
  return std::sqrt(double(best_j) / double(best_k));
}

struct DimensionBound {
  double kappa = 1.0, c10 = 0.0, c11 = 0.0, log_MA_sq = 0.0;
  double log_x = 0.0;    ///< log(c₁₀c₁₁κ^{-2}M_A²)
  double log_N = 0.0;    ///< log N (+inf when only log log N is representable)
  double log_log_N = 0.0;
  bool saturated = false;  ///< N not representable as an exact integer in double precision
  std::uint64_t N = 0;     ///< valid when !saturated
  /// Sign of the trace-bound curve at N: true when negative, false when not, empty when the
  /// exact evaluation exceeds the precision cap.
  std::optional<bool> curve_negative_at_N;

  /// -κm^{3/2}/c₁₁ + m·c₁₀M_A²/κ (may overflow to ±∞ for astronomical M_A).
  double curve(double m) const {
    return -kappa * std::pow(m, 1.5) / c11 + m * c10 * std::exp(log_MA_sq) / kappa;
  }
  /// Sign of the curve at m = exp(log_m), in the log domain: negative iff ½·log m > log_x.
  bool curve_negative_log(double log_m) const { return 0.5 * log_m > log_x; }
  /// m ≤ N.
  bool dominates(double m) const {
    if (!saturated) return m <= double(N);
    return std::log(m) <= log_N;
  }
};

namespace detail {

/// Whether x² = exp(2·log_x) is an integer, decided in MPFR with enough bits to resolve its
/// fractional part. Empty when more than max_bits would be needed.
inline std::optional<bool> exp_is_integer(double two_log_x, long max_bits = 1L << 22) {
  const double bits = two_log_x / std::log(2.0) + 128.0;
  if (bits > double(max_bits)) return std::nullopt;
  mpfr_t y, frac;
  const mpfr_prec_t prec = std::max<mpfr_prec_t>(128, mpfr_prec_t(bits));
  mpfr_init2(y, prec);
  mpfr_init2(frac, prec);
  mpfr_set_d(y, two_log_x, MPFR_RNDN);
  mpfr_exp(y, y, MPFR_RNDN);
  mpfr_frac(frac, y, MPFR_RNDN);
  const double f = mpfr_get_d(frac, MPFR_RNDN);
  mpfr_clear(y);
  mpfr_clear(frac);
  return f == 0.0;
}

}  // namespace detail

namespace detail {

inline DimensionBound make_bound(double kappa, double log_MA_sq, double c10, double c11, double x2_direct) {
  if (!(kappa > 0.0) || !(c10 > 0.0) || !(c11 > 0.0))
    throw PreconditionError("dimension_bound: kappa, c10, c11 must be positive");
  DimensionBound b;
  b.kappa = kappa;
  b.c10 = c10;
  b.c11 = c11;
  b.log_MA_sq = log_MA_sq;
  b.log_x = std::log(c10) + std::log(c11) - 2.0 * std::log(kappa) + log_MA_sq;
  const double x2 = std::isfinite(x2_direct) ? x2_direct : std::exp(2.0 * b.log_x);
  b.saturated = !(x2 < 9007199254740992.0);  // 2^53
  if (!b.saturated) {
    const double N = std::max(1.0, std::ceil(x2));
    b.N = std::uint64_t(N);
    b.log_N = std::log(N);
    b.curve_negative_at_N = N > x2;
  } else {
    b.N = std::numeric_limits<std::uint64_t>::max();
    b.log_N = 2.0 * b.log_x;
    if (auto is_int = exp_is_integer(2.0 * b.log_x)) b.curve_negative_at_N = !*is_int;
  }
  b.log_log_N = std::log(b.log_N);
  return b;
}

}  // namespace detail

/// N = ⌈(c₁₀c₁₁κ^{-2}M_A²)²⌉ from log M_A² (computed in the log domain).
inline DimensionBound dimension_bound(double kappa, double log_MA_sq, double c10, double c11) {
  return detail::make_bound(kappa, log_MA_sq, c10, c11, std::numeric_limits<double>::quiet_NaN());
}

/// From log log M_A², for radii whose logarithm overflows. N is then only known through
/// log log N and the sign of the curve at N cannot be resolved.
inline DimensionBound dimension_bound_loglog(double kappa, double log_log_MA_sq, double c10, double c11) {
  if (log_log_MA_sq < std::log(700.0)) return dimension_bound(kappa, std::exp(log_log_MA_sq), c10, c11);
  if (!(kappa > 0.0) || !(c10 > 0.0) || !(c11 > 0.0))
    throw PreconditionError("dimension_bound: kappa, c10, c11 must be positive");
  DimensionBound b;
  b.kappa = kappa;
  b.c10 = c10;
  b.c11 = c11;
  const double shift = std::log(c10) + std::log(c11) - 2.0 * std::log(kappa);
  b.log_MA_sq = std::exp(log_log_MA_sq);
  b.log_x = b.log_MA_sq + shift;
  b.saturated = true;
  b.N = std::numeric_limits<std::uint64_t>::max();
  b.log_N = 2.0 * b.log_x;
  // log(2(L + shift)) with L = exp(log_log_MA_sq)
  b.log_log_N = std::log(2.0) + log_log_MA_sq + std::log1p(shift * std::exp(-log_log_MA_sq));
  if (std::isfinite(b.log_N)) {
    if (auto is_int = detail::exp_is_integer(b.log_N)) b.curve_negative_at_N = !*is_int;
  }
  return b;
}

/// Same from M_A itself; x = c₁₀c₁₁M_A²/κ² is formed directly while it is finite.
inline DimensionBound dimension_bound_from_MA(double kappa, double M_A, double c10, double c11) {
  if (!(M_A > 0.0)) throw PreconditionError("dimension_bound: M_A must be positive");
  const double x = c10 * c11 * M_A * M_A / (kappa * kappa);
  return detail::make_bound(kappa, 2.0 * std::log(M_A), c10, c11, x * x);
}

// ---------------------------------------------------------------------------------------------
// Residual tests

namespace detail {

/// Fixed-step schedule from 0 through the sorted targets, shortening steps to land on each.
inline std::vector<std::pair<double, int>> schedule(double dt, const std::vector<double>& targets) {
  std::vector<std::pair<double, int>> out;  // (dt, index of target reached or -1)
  double t = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    while (t < targets[i]) {
      if (t + dt >= targets[i] * (1.0 - 1e-14)) {
        out.push_back({targets[i] - t, int(i)});
        t = targets[i];
      } else {
        out.push_back({dt, -1});
        t += dt;
      }
    }
    if (out.empty() || out.back().second != int(i)) out.push_back({0.0, int(i)});
  }
  return out;
}

inline std::vector<double> sorted_times(std::vector<double> ts, const char* who) {
  for (double t : ts)
    if (!(t >= 0.0) || !std::isfinite(t)) throw PreconditionError(std::string(who) + ": times must be finite and >= 0");
  std::sort(ts.begin(), ts.end());
  return ts;
}

}  // namespace detail

struct FrechetPoint {
  double r;
  double ratio;   ///< ‖η(t)‖_{H¹}/r
  bool excluded;  ///< below the solver noise floor
};

struct FrechetCurve {
  double t;
  std::vector<FrechetPoint> points;
  double slope = std::numeric_limits<double>::quiet_NaN();  ///< least-squares d log ratio / d log r
  bool decreasing = true;                                   ///< ratio decreases with r
};

/// η(t) = S(t)(θ₀ + rξ̂₀) - S(t)θ₀ - r·ξ(t), ξ̂₀ = ξ₀/‖ξ₀‖_{H¹}, with ξ the tangent solution.
/// All runs share one fixed step schedule (config.dt, no CFL adaptation).
/// Points with ‖η‖_{H¹} ≤ noise_floor·(‖θ(t)‖_{H¹} + r‖ξ(t)‖_{H¹}) sit at round-off level and are excluded.
inline std::vector<FrechetCurve> frechet_residual(const SpectralField& theta0, const SpectralField& xi0,
                                                  const SpectralField& force, const SolverConfig& config,
                                                  const std::vector<double>& times, const std::vector<double>& scales,
                                                  double noise_floor = 1e-13) {
  theta0.check_same(xi0);
  if (!theta0.is_mean_zero() || !xi0.is_mean_zero())
    throw PreconditionError("frechet_residual: fields must have zero mean");
  if (scales.empty()) throw PreconditionError("frechet_residual: no scales");
  for (double r : scales)
    if (!(r > 0.0)) throw PreconditionError("frechet_residual: scales must be positive");
  const auto ts = detail::sorted_times(times, "frechet_residual");
  const auto sched = detail::schedule(config.dt, ts);
  Stepper stepper(theta0.grid(), config, force);

  const double xnorm = sobolev_norm(xi0, 1.0);
  SpectralField dir = xi0;
  if (xnorm > 0.0) dir *= 1.0 / xnorm;

  // base + tangent
  std::vector<SpectralField> base_at, tan_at;
  {
    SpectralField th = theta0;
    std::vector<SpectralField> xs{dir};
    for (auto [dt, hit] : sched) {
      if (dt > 0.0) advance(stepper, th, xs, dt);
      if (hit >= 0) {
        base_at.push_back(th);
        tan_at.push_back(xs[0]);
      }
    }
  }
  std::vector<std::vector<SpectralField>> pert_at(scales.size());
  parallel_for(scales.size(), [&](std::size_t s) {
    SpectralField th = theta0;
    th.axpy(scales[s], dir);
    for (auto [dt, hit] : sched) {
      if (dt > 0.0) {
        th = stepper.step(th, dt);
        if (!th.all_finite()) throw BlowupError("frechet_residual: perturbed run blew up", th, 0.0);
      }
      if (hit >= 0) pert_at[s].push_back(th);
    }
  });

  std::vector<FrechetCurve> out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    FrechetCurve c;
    c.t = ts[i];
    const double scale = sobolev_norm(base_at[i], 1.0);
    for (std::size_t s = 0; s < scales.size(); ++s) {
      const double r = scales[s];
      SpectralField eta = pert_at[s][i] - base_at[i];
      eta.axpy(-r, tan_at[i]);
      const double e = sobolev_norm(eta, 1.0);
      const double floor = noise_floor * (scale + r * sobolev_norm(tan_at[i], 1.0));
      c.points.push_back({r, e / r, xnorm > 0.0 && e <= floor});
    }
    std::sort(c.points.begin(), c.points.end(), [](const auto& a, const auto& b) { return a.r > b.r; });
    std::vector<double> lx, ly;
    for (const auto& p : c.points) {
      if (p.excluded || !(p.ratio > 0.0)) continue;
      lx.push_back(std::log(p.r));
      ly.push_back(std::log(p.ratio));
    }
    for (std::size_t k = 1; k < c.points.size(); ++k)
      if (!c.points[k].excluded && !c.points[k - 1].excluded && c.points[k].ratio > c.points[k - 1].ratio)
        c.decreasing = false;
    if (lx.size() >= 2) {
      const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
      const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
      }
      c.slope = sxy / sxx;
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct ContinuityResult {
  enum class Status { ok, identical };
  Status status = Status::ok;
  std::vector<double> times;
  std::vector<double> ratios;    ///< ‖S(t)θ₀ - S(t)θ̃₀‖_{H¹}/‖θ₀ - θ̃₀‖_{H¹}
  std::vector<double> envelope;  ///< fitted e(t) = exp(b·t)
  double rate = 0.0;             ///< b ≥ 0, smallest exponential rate dominating the ratios
  bool finite = true;
  bool bounded = true;

  double fitted(double t) const { return std::exp(rate * t); }
};

/// Growth of the H¹ distance between S(t)θ₀ and S(t)(θ₀ + perturbation) on the given times.
inline ContinuityResult continuity_test(const SpectralField& theta0, const SpectralField& perturbation,
                                        const SpectralField& force, const SolverConfig& config,
                                        const std::vector<double>& times) {
  theta0.check_same(perturbation);
  if (!theta0.is_mean_zero() || !perturbation.is_mean_zero())
    throw PreconditionError("continuity_test: fields must have zero mean");
  ContinuityResult res;
  const double d0 = sobolev_norm(perturbation, 1.0);
  if (d0 == 0.0) {
    res.status = ContinuityResult::Status::identical;
    return res;
  }
  const auto ts = detail::sorted_times(times, "continuity_test");
  const auto sched = detail::schedule(config.dt, ts);
  Stepper stepper(theta0.grid(), config, force);
  SpectralField a = theta0, b = theta0 + perturbation;
  for (auto [dt, hit] : sched) {
    if (dt > 0.0) {
      a = stepper.step(a, dt);
      b = stepper.step(b, dt);
    }
    if (hit >= 0) {
      res.times.push_back(ts[hit]);
      res.ratios.push_back(sobolev_norm(b - a, 1.0) / d0);
    }
  }
  for (std::size_t i = 0; i < res.times.size(); ++i) {
    if (!std::isfinite(res.ratios[i])) res.finite = false;
    if (res.times[i] > 0.0 && res.ratios[i] > 1.0) res.rate = std::max(res.rate, std::log(res.ratios[i]) / res.times[i]);
  }
  for (std::size_t i = 0; i < res.times.size(); ++i) {
    res.envelope.push_back(res.fitted(res.times[i]));
    if (!(res.ratios[i] <= res.envelope.back() * (1.0 + 1e-12))) res.bounded = false;
  }
  return res;
}

}  // namespace sqg
