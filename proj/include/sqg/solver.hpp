#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sqg/error.hpp"
#include "sqg/field.hpp"
#include "sqg/snapshot.hpp"

namespace sqg {

enum class Integrator { imex_cn, etdrk2 };
enum class Dealias { two_thirds, none };

inline const char* to_string(Integrator i) { return i == Integrator::imex_cn ? "imex-cn" : "etdrk2"; }
inline const char* to_string(Dealias d) { return d == Dealias::two_thirds ? "two-thirds" : "none"; }

/// Time-integration settings for ∂_tθ + u·∇θ + κΛθ - εΔθ = J_ε f.
struct SolverConfig {
  double kappa = 1.0;
  double dt = 1e-3;  ///< maximal step; reduced adaptively to respect the CFL budget
  double t_end = 1.0;
  Integrator integrator = Integrator::imex_cn;
  Dealias dealias = Dealias::two_thirds;
  double epsilon = 0.0;          ///< regularization -εΔ
  double mollifier_width = 0.0;  ///< Gaussian J_ε applied to the force
  std::uint64_t seed = 0;
  double cfl = 0.5;       ///< dt·‖u‖_∞·n/(2π) ≤ cfl
  bool adaptive = true;   ///< false: always use dt (the CFL budget is then only checked)

  void validate() const {
    if (!(kappa > 0.0)) throw PreconditionError("SolverConfig: kappa must be positive");
    if (!(dt > 0.0)) throw PreconditionError("SolverConfig: dt must be positive");
    if (!(t_end >= 0.0)) throw PreconditionError("SolverConfig: t_end must be nonnegative");
    if (!(epsilon >= 0.0)) throw PreconditionError("SolverConfig: epsilon must be nonnegative");
    if (!(mollifier_width >= 0.0)) throw PreconditionError("SolverConfig: mollifier_width must be nonnegative");
    if (!(cfl > 0.0)) throw PreconditionError("SolverConfig: cfl must be positive");
  }
};

/// Time-independent mean-zero force.
struct ForceSpec {
  enum class Kind { zero, single_mode, random_band, file };
  Kind kind = Kind::zero;
  int k1 = 1, k2 = 0;        ///< single_mode wavevector
  double amplitude = 0.0;    ///< single_mode: f = amplitude·cos(k·x); random_band: ‖f‖_∞
  double band = 4.0;         ///< random_band radius
  std::uint64_t seed = 0;
  std::string path;          ///< file: snapshot written by write_snapshot

  SpectralField build(const TorusGrid& g) const {
    SpectralField f(g);
    switch (kind) {
      case Kind::zero:
        break;
      case Kind::single_mode:
        f = cosine_mode(g, k1, g.dim() == 2 ? k2 : 0, amplitude);
        break;
      case Kind::random_band:
        f = random_band_field(g, band, seed, amplitude);
        break;
      case Kind::file: {
        auto [loaded, t] = read_snapshot(path);
        (void)t;
        if (loaded.grid().dim() != g.dim() || loaded.grid().n() != g.n())
          throw PreconditionError("ForceSpec: grid of " + path + " does not match the run grid");
        f = std::move(loaded);
        break;
      }
    }
    if (!f.is_mean_zero()) throw PreconditionError("ForceSpec: force must have zero mean");
    return f;
  }
};

inline const char* to_string(ForceSpec::Kind k) {
  switch (k) {
    case ForceSpec::Kind::zero: return "zero";
    case ForceSpec::Kind::single_mode: return "single_mode";
    case ForceSpec::Kind::random_band: return "random_band";
    case ForceSpec::Kind::file: return "file";
  }
  return "?";
}

/// A built force with its cached norms.
struct Force {
  SpectralField field;
  double linf = 0.0;
  double h1 = 0.0;

  explicit Force(SpectralField f)
      : field(std::move(f)), linf(lp_norm(field, LpOrder::infinity())), h1(sobolev_norm(field, 1.0)) {}
  Force(const ForceSpec& spec, const TorusGrid& g) : Force(spec.build(g)) {}
};

/// Numerical blowup: a step produced NaN or Inf. Carries the last finite state.
class BlowupError : public NumericalError {
 public:
  BlowupError(const std::string& msg, SpectralField last, double time)
      : NumericalError(msg), last_(std::move(last)), time_(time) {}
  const SpectralField& last_valid_state() const noexcept { return last_; }
  double time() const noexcept { return time_; }

 private:
  SpectralField last_;
  double time_;
};

/// Spectral Gaussian mollifier exp(-width²|k|²/2).
inline SpectralField mollify_force(const SpectralField& f, double width) {
  if (!(width >= 0.0)) throw PreconditionError("mollify_force: width must be nonnegative");
  if (width == 0.0) return f;
  return apply_multiplier(f, [width](int k1, int k2) {
    return std::exp(-0.5 * width * width * (double(k1) * k1 + double(k2) * k2));
  });
}

namespace detail {

inline void filter(SpectralField& f, Dealias d) {
  if (d == Dealias::two_thirds) dealias_two_thirds(f);
}

}  // namespace detail

/// -u·∇θ with u = R^⊥θ, products on the collocation grid, dealiased and mean-zero.
inline SpectralField nonlinear_term(const SpectralField& theta, Dealias dealias = Dealias::two_thirds) {
  if (theta.grid().dim() != 2) throw UnsupportedError("nonlinear_term: SQG requires dim = 2");
  SpectralField th = theta;
  detail::filter(th, dealias);
  auto [u1, u2] = riesz_perp(th);
  auto a1 = u1.values(), a2 = u2.values();
  auto g1 = partial(th, 0).values(), g2 = partial(th, 1).values();
  std::vector<double> prod(a1.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = -(a1[i] * g1[i] + a2[i] * g2[i]);
  auto out = SpectralField::from_values(theta.grid(), prod);
  detail::filter(out, dealias);
  out.project_mean_zero();
  return out;
}

/// -θ∂_xθ = -½∂_x(θ²) in conservative form (1D), dealiased and mean-zero.
inline SpectralField burgers_nonlinear_term(const SpectralField& theta, Dealias dealias = Dealias::two_thirds) {
  if (theta.grid().dim() != 1) throw UnsupportedError("burgers_nonlinear_term: requires dim = 1");
  SpectralField th = theta;
  detail::filter(th, dealias);
  auto sq = multiply(th, th);
  detail::filter(sq, dealias);
  auto out = partial(sq, 0);
  out *= -0.5;
  out.project_mean_zero();
  return out;
}

/// ‖u‖_∞ on the collocation grid (u = R^⊥θ in 2D, u = θ in 1D).
inline double velocity_sup(const SpectralField& theta) {
  if (theta.grid().dim() == 1) return lp_norm(theta, LpOrder::infinity());
  auto [u1, u2] = riesz_perp(theta);
  auto a = u1.values(), b = u2.values();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::hypot(a[i], b[i]));
  return m;
}

/// One-step integrator for forced critical SQG (dim 2) or critical Burgers (dim 1).
///
/// The linear part L = -κ|k| - ε|k|² is diagonal. IMEX-CN: Crank–Nicolson on L with Heun on the
/// nonlinear term,
///   θ* = [(1 + dtL/2)θ + dt(N(θ) + f)] / (1 - dtL/2),
///   θ⁺ = [(1 + dtL/2)θ + dt/2 (N(θ) + N(θ*)) + dt f] / (1 - dtL/2).
/// ETDRK2 (Cox–Matthews):
///   a  = e^{dtL}θ + dt φ₁(dtL)(N(θ) + f),
///   θ⁺ = a + dt φ₂(dtL)(N(a) - N(θ)).
class Stepper {
 public:
  /// Intermediate states of one step, exposed for the tangent linearization.
  struct Detail {
    SpectralField n0;     ///< N(θ)
    SpectralField stage;  ///< θ* (IMEX-CN) or a (ETDRK2)
    SpectralField n1;     ///< N(stage)
    SpectralField next;
  };

  Stepper(const TorusGrid& grid, SolverConfig config, const SpectralField& force)
      : grid_(grid), config_(config), force_(mollify_force(force, config.mollifier_width)) {
    config_.validate();
    force_.check_same(SpectralField(grid));
    if (!force_.is_mean_zero()) throw PreconditionError("Stepper: force must have zero mean");
    force_.project_mean_zero();
    symbol_.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double k = grid.kabs(i);
      symbol_[i] = -config_.kappa * k - config_.epsilon * k * k;
    }
  }

  const SolverConfig& config() const noexcept { return config_; }
  const TorusGrid& grid() const noexcept { return grid_; }
  const SpectralField& force() const noexcept { return force_; }
  /// L(k) at flat index i.
  double symbol(std::size_t i) const noexcept { return symbol_[i]; }

  SpectralField nonlinear(const SpectralField& theta) const {
    return grid_.dim() == 2 ? nonlinear_term(theta, config_.dealias) : burgers_nonlinear_term(theta, config_.dealias);
  }

  /// Largest step allowed by the CFL budget for this state (∞ for a vanishing velocity).
  double cfl_dt(const SpectralField& theta) const {
    const double u = velocity_sup(theta);
    if (u == 0.0) return std::numeric_limits<double>::infinity();
    return config_.cfl * 2.0 * std::numbers::pi / (grid_.n() * u);
  }

  Detail step_detailed(const SpectralField& theta, double dt) const {
    Detail d;
    d.n0 = nonlinear(theta);
    const auto th = theta.coeffs();
    const auto f = force_.coeffs();
    d.stage = SpectralField(grid_);
    d.next = SpectralField(grid_);
    if (config_.integrator == Integrator::imex_cn) {
      auto n0 = d.n0.coeffs();
      auto st = d.stage.coeffs();
      for (std::size_t i = 0; i < th.size(); ++i) {
        const double z = 0.5 * dt * symbol_[i];
        st[i] = ((1.0 + z) * th[i] + dt * (n0[i] + f[i])) / (1.0 - z);
      }
      d.n1 = nonlinear(d.stage);
      auto n1 = d.n1.coeffs();
      auto nx = d.next.coeffs();
      for (std::size_t i = 0; i < th.size(); ++i) {
        const double z = 0.5 * dt * symbol_[i];
        nx[i] = ((1.0 + z) * th[i] + 0.5 * dt * (n0[i] + n1[i]) + dt * f[i]) / (1.0 - z);
      }
    } else {
      auto n0 = d.n0.coeffs();
      auto st = d.stage.coeffs();
      for (std::size_t i = 0; i < th.size(); ++i) {
        const double z = dt * symbol_[i];
        st[i] = std::exp(z) * th[i] + dt * phi1(z) * (n0[i] + f[i]);
      }
      d.n1 = nonlinear(d.stage);
      auto n1 = d.n1.coeffs();
      auto nx = d.next.coeffs();
      for (std::size_t i = 0; i < th.size(); ++i) {
        const double z = dt * symbol_[i];
        nx[i] = st[i] + dt * phi2(z) * (n1[i] - n0[i]);
      }
    }
    d.next.project_mean_zero();
    return d;
  }

  SpectralField step(const SpectralField& theta, double dt) const { return step_detailed(theta, dt).next; }

  /// φ₁(z) = (e^z - 1)/z, φ₂(z) = (e^z - 1 - z)/z², with series near 0.
  static double phi1(double z) {
    if (std::abs(z) < 1e-5) return 1.0 + z / 2.0 + z * z / 6.0;
    return std::expm1(z) / z;
  }
  static double phi2(double z) {
    if (std::abs(z) < 1e-3) return 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0;
    return (std::expm1(z) - z) / (z * z);
  }

 private:
  TorusGrid grid_;
  SolverConfig config_;
  SpectralField force_;
  std::vector<double> symbol_;
};

/// One step of forced critical SQG.
inline SpectralField step(const SpectralField& theta, const SolverConfig& config, const SpectralField& force) {
  if (theta.grid().dim() != 2) throw UnsupportedError("step: SQG requires dim = 2");
  Stepper s(theta.grid(), config, force);
  auto next = s.step(theta, config.dt);
  if (!next.all_finite()) throw BlowupError("integration blowup in a single step", theta, 0.0);
  return next;
}

/// One step of critical Burgers ∂_tθ + θ∂_xθ + κΛθ = f in 1D.
inline SpectralField burgers_step(const SpectralField& theta, const SolverConfig& config, const SpectralField& force) {
  if (theta.grid().dim() != 1) throw UnsupportedError("burgers_step: requires dim = 1");
  Stepper s(theta.grid(), config, force);
  auto next = s.step(theta, config.dt);
  if (!next.all_finite()) throw BlowupError("integration blowup in a single step", theta, 0.0);
  return next;
}

/// Per-snapshot callback.
using Probe = std::function<void(double t, const SpectralField& theta)>;

struct RunOptions {
  double snapshot_interval = 0.1;
  bool keep_snapshots = true;
  std::optional<double> holder_alpha;  ///< record [θ]_{C^α} in the norm reports
};

struct Trajectory {
  std::vector<double> times;
  std::vector<SpectralField> snapshots;
  std::vector<NormReport> reports;
  std::size_t steps = 0;
  double min_dt = std::numeric_limits<double>::infinity();
};

/// Integrates from θ₀ to config.t_end. Snapshots (and probes) at t = 0, every snapshot_interval,
/// and t_end; steps are shortened to land exactly on snapshot times.
inline Trajectory run(const SpectralField& theta0, const SolverConfig& config, const SpectralField& force,
                      const std::vector<Probe>& probes = {}, const RunOptions& options = {}) {
  if (!theta0.is_mean_zero()) throw PreconditionError("run: initial data must have zero mean");
  if (!(options.snapshot_interval > 0.0)) throw PreconditionError("run: snapshot_interval must be positive");
  Stepper stepper(theta0.grid(), config, force);
  Trajectory traj;
  SpectralField theta = theta0;
  theta.project_mean_zero();
  auto record = [&](double t) {
    traj.times.push_back(t);
    traj.reports.push_back(norm_report(theta, t, options.holder_alpha));
    if (options.keep_snapshots) traj.snapshots.push_back(theta);
    for (const auto& p : probes) p(t, theta);
  };
  record(0.0);
  const double T = config.t_end;
  std::size_t next_snap = 1;
  double t = 0.0;
  while (t < T) {
    const double t_snap = std::min(T, double(next_snap) * options.snapshot_interval);
    double dt = config.dt;
    if (config.adaptive) dt = std::min(dt, stepper.cfl_dt(theta));
    bool lands = false;
    if (t + dt >= t_snap * (1.0 - 1e-14)) {
      dt = t_snap - t;
      lands = true;
    }
    if (!(dt > 0.0)) {
      t = t_snap;
      lands = true;
    } else {
      SpectralField next = stepper.step(theta, dt);
      if (!next.all_finite()) throw BlowupError("integration blowup at t = " + std::to_string(t + dt), theta, t);
      theta = std::move(next);
      traj.steps += 1;
      traj.min_dt = std::min(traj.min_dt, dt);
      t = lands ? t_snap : t + dt;
    }
    if (lands) {
      record(t);
      ++next_snap;
    }
  }
  return traj;
}

}  // namespace sqg
