#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "sqg/constants.hpp"
#include "sqg/corpus.hpp"
#include "sqg/diagnostics.hpp"
#include "sqg/kernels.hpp"
#include "sqg/snapshot.hpp"
#include "sqg/solver.hpp"
#include "sqg/tangent.hpp"

namespace sqg {

/// Calibration of the universal constants against a seeded corpus. Each constant is the extreme
/// value consistent with the corpus, multiplied (or, for c₀, divided) by `safety`. c₁₁ comes from
/// lattice enumeration and is not inflated; ε₀ is fixed.
struct CalibrationOptions {
  int n = 32;
  double kappa = 1.0;
  double dt = 5e-3;
  double t_end = 10.0;
  double snapshot_interval = 0.1;
  std::uint64_t seed0 = 1001;
  double safety = 2.0;
  double eps0 = 1.0 / 32.0;
  std::size_t lattice_count = 10000;
};

struct CalibrationReport {
  UniversalConstants constants;
  double c0_raw = 0.0;        ///< largest c₀ with every decay envelope satisfied
  double c2_min_ratio = 0.0;  ///< min D[δ_hθ]‖θ‖_∞|h|/|δ_hθ|³
  double c5_raw = 0.0;        ///< smallest c₅ with no Hölder envelope violation
  double c7_raw = 0.0, c8_raw = 0.0, c9_raw = 0.0, c10_raw = 0.0, backward_raw = 0.0;
  std::size_t runs = 0, corpus_fields = 0, shifts = 0, gradient_points = 0, tangent_samples = 0, pairs = 0;
};

namespace calib {

/// Shifts used by the nonlinear lower bound experiments.
inline std::vector<std::array<double, 2>> lower_bound_shifts() {
  constexpr double p = std::numbers::pi;
  return {{p / 8, 0.0}, {0.0, p / 8}, {p / 4, p / 4}, {p / 2, 0.0},
          {-p / 3, p / 5}, {p, 0.0}, {p / 16, -p / 16}, {3 * p / 4, p / 2}};
}

struct Run {
  SpectralField theta0, force;
  double f_linf = 0.0, f_h1 = 0.0;
  Trajectory traj;
};

/// 4 forces (zero and three random band forces of sup norm 0.5, 1, 2) × 3 random data.
inline std::vector<Run> forced_runs(const CalibrationOptions& o, std::uint64_t seed0) {
  TorusGrid g(2, o.n);
  std::vector<Run> runs;
  const double amps[] = {0.0, 0.5, 1.0, 2.0};
  for (int fi = 0; fi < 4; ++fi) {
    SpectralField f(g);
    if (amps[fi] > 0.0) {
      f = random_band_field(g, 3.0, seed0 + 100 + fi, amps[fi]);
      dealias_two_thirds(f);
    }
    for (int di = 0; di < 3; ++di) {
      Run r;
      r.theta0 = random_band_field(g, 4.0, seed0 + di, 1.0);
      dealias_two_thirds(r.theta0);
      r.force = f;
      r.f_linf = lp_norm(f, LpOrder::infinity());
      r.f_h1 = sobolev_norm(f, 1.0);
      runs.push_back(std::move(r));
    }
  }
  SolverConfig cfg;
  cfg.kappa = o.kappa;
  cfg.dt = o.dt;
  cfg.t_end = o.t_end;
  RunOptions ro;
  ro.snapshot_interval = o.snapshot_interval;
  parallel_for(runs.size(), [&](std::size_t i) { runs[i].traj = run(runs[i].theta0, cfg, runs[i].force, {}, ro); });
  return runs;
}

inline double lp_of(const NormReport& r, LpOrder p) {
  if (p.is_infinite()) return r.linf;
  return p.p == 2.0 ? r.l2 : r.l4;
}

/// Whether every snapshot norm of the run lies below the decay envelope at rate factor c0.
inline bool decay_holds(const Run& r, double kappa, double c0) {
  const LpOrder orders[] = {LpOrder{2.0}, LpOrder{4.0}, LpOrder::infinity()};
  for (auto p : orders) {
    const double n0 = lp_of(r.traj.reports.front(), p);
    const double fn = lp_norm(r.force, p);
    for (const auto& rep : r.traj.reports) {
      const double env = decay_envelope(p, rep.t, n0, fn, kappa, c0);
      if (lp_of(rep, p) > env * (1.0 + 1e-12) + 1e-14) return false;
    }
  }
  return true;
}

/// Largest c with pred(c) on [lo, hi] for a predicate true below a threshold (geometric bisection).
template <class Pred>
double largest_true(Pred&& pred, double lo, double hi) {
  if (pred(hi)) return hi;
  if (!pred(lo)) return 0.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = std::sqrt(lo * hi);
    (pred(mid) ? lo : hi) = mid;
  }
  return lo;
}

/// Smallest c with pred(c) on [lo, hi] for a predicate true above a threshold.
template <class Pred>
double smallest_true(Pred&& pred, double lo, double hi) {
  if (pred(lo)) return lo;
  if (!pred(hi)) return std::numeric_limits<double>::infinity();
  for (int i = 0; i < 80; ++i) {
    const double mid = std::sqrt(lo * hi);
    (pred(mid) ? hi : lo) = mid;
  }
  return hi;
}

/// ⟨a, b⟩ with the quadratic term formed alias-free on a doubled grid: returns the transport
/// products N(θ) = -u·∇θ and N'(θ)ξ for band-limited inputs without truncation.
inline SpectralField exact_transport(const SpectralField& theta) {
  const int n = theta.grid().n();
  auto th = resample(theta, 2 * n);
  auto out = nonlinear_term(th, Dealias::none);
  return out;
}

inline SpectralField exact_linearized_transport(const SpectralField& theta, const SpectralField& xi) {
  const int n = theta.grid().n();
  return linearized_nonlinear(resample(theta, 2 * n), resample(xi, 2 * n), Dealias::none);
}

/// Top generalized eigenvectors of the symmetric part of ξ ↦ ⟨ξ, N'(θ)ξ⟩_{H¹} against the
/// H^s norms, s ∈ {1, 1.125, 1.25, 1.375, 1.5}, over the dealiased modes of θ's grid.
inline std::vector<SpectralField> adversarial_directions(const SpectralField& theta) {
  const auto& g = theta.grid();
  const int n = g.n(), kc = dealias_cutoff(g);
  struct Basis {
    int k1, k2;
    bool sine;
  };
  std::vector<Basis> basis;
  for (int k1 = 0; k1 <= kc; ++k1)
    for (int k2 = -kc; k2 <= kc; ++k2)
      if (k1 > 0 || k2 > 0) {
        basis.push_back({k1, k2, false});
        basis.push_back({k1, k2, true});
      }
  const auto m = Eigen::Index(basis.size());
  auto make = [&](const Basis& b) {
    SpectralField e(g);
    e.coeff(b.k1, b.k2) = b.sine ? cplx(0.0, -0.5) : cplx(0.5, 0.0);
    e.coeff(-b.k1, -b.k2) = b.sine ? cplx(0.0, 0.5) : cplx(0.5, 0.0);
    return e;
  };
  const auto th2 = resample(theta, 2 * n);
  Eigen::MatrixXd Q(m, m);
  parallel_for(basis.size(), [&](std::size_t j) {
    const auto out = linearized_nonlinear(th2, resample(make(basis[j]), 2 * n), Dealias::none);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& b = basis[std::size_t(i)];
      const cplx c = out.coeff(b.k1, b.k2);
      const double k2 = double(b.k1 * b.k1 + b.k2 * b.k2);
      Q(i, Eigen::Index(j)) = g.volume() * k2 * (b.sine ? -c.imag() : c.real());
    }
  });
  const Eigen::MatrixXd S = 0.5 * (Q + Q.transpose());
  std::vector<SpectralField> out;
  for (double s : {1.0, 1.125, 1.25, 1.375, 1.5}) {
    Eigen::VectorXd w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& b = basis[std::size_t(i)];
      w(i) = 0.5 * g.volume() * std::pow(double(b.k1 * b.k1 + b.k2 * b.k2), s);
    }
    const Eigen::VectorXd r = w.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd A = r.asDiagonal() * S * r.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const Eigen::VectorXd v = r.cwiseProduct(es.eigenvectors().col(m - 1));
    SpectralField x(g);
    for (Eigen::Index i = 0; i < m; ++i) x.axpy(v(i), make(basis[std::size_t(i)]));
    out.push_back(x);
  }
  return out;
}

/// Pointwise gradient data of θ at the given collocation points.
struct GradientSample {
  double grad = 0.0;     ///< |∇θ|
  double grad_u = 0.0;   ///< Frobenius norm of ∇R^⊥θ
  double D = 0.0;        ///< D₁[∂₁θ] + D₁[∂₂θ]
};

inline std::vector<GradientSample> gradient_samples(const SpectralField& theta, std::size_t top, std::size_t stride) {
  auto p1 = partial(theta, 0), p2 = partial(theta, 1);
  auto [u1, u2] = riesz_perp(theta);
  const auto g1 = p1.values(), g2 = p2.values();
  const auto u11 = partial(u1, 0).values(), u12 = partial(u1, 1).values();
  const auto u21 = partial(u2, 0).values(), u22 = partial(u2, 1).values();
  std::vector<std::size_t> idx(g1.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::hypot(g1[a], g2[a]) > std::hypot(g1[b], g2[b]);
  });
  std::vector<std::size_t> pts(idx.begin(), idx.begin() + std::min(top, idx.size()));
  for (std::size_t i = 0; i < g1.size(); i += stride)
    if (std::find(pts.begin(), pts.end(), i) == pts.end()) pts.push_back(i);
  DissipationEvaluator d1(p1, 1.0, {}), d2(p2, 1.0, {});
  std::vector<GradientSample> out(pts.size());
  parallel_for(pts.size(), [&](std::size_t j) {
    const std::size_t i = pts[j];
    out[j].grad = std::hypot(g1[i], g2[i]);
    out[j].grad_u = std::sqrt(u11[i] * u11[i] + u12[i] * u12[i] + u21[i] * u21[i] + u22[i] * u22[i]);
    out[j].D = d1.at(i) + d2.at(i);
  });
  return out;
}

}  // namespace calib

/// Runs the full calibration. Deterministic for fixed options (serial reductions).
inline CalibrationReport calibrate(const CalibrationOptions& o, std::ostream* log = nullptr) {
  CalibrationReport rep;
  auto& c = rep.constants;
  c.version = 1;
  c.eps0 = o.eps0;
  auto say = [&](const std::string& s) {
    if (log) *log << s << std::endl;
  };

  c.c11 = c11_from_lattice(o.lattice_count);
  say("c11 from lattice enumeration: " + format_double(c.c11));

  auto runs = calib::forced_runs(o, o.seed0);
  rep.runs = runs.size();
  say("calibration runs: " + std::to_string(runs.size()));

  // c₀: decay envelopes
  double c0 = std::numeric_limits<double>::infinity();
  for (const auto& r : runs)
    c0 = std::min(c0, calib::largest_true([&](double x) { return calib::decay_holds(r, o.kappa, x); }, 1e-6, 10.0));
  rep.c0_raw = c0;
  c.c0 = c0 / o.safety;
  c.eps1 = c.eps0 * c.c0 / 2.0;
  say("c0 raw " + format_double(rep.c0_raw) + " -> " + format_double(c.c0));

  // c₂: nonlinear lower bound on the calibration corpus
  {
    const auto corpus = standard_corpus(o.seed0, "cal", o.n);
    const auto shifts = calib::lower_bound_shifts();
    rep.corpus_fields = corpus.size();
    rep.shifts = shifts.size();
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& e : corpus) {
      const auto f = e.build();
      for (const auto& h : shifts) {
        auto lb = nonlinear_lower_bound_check(f, h, 1.0);
        if (!lb.empty()) mn = std::min(mn, lb.min_ratio);
      }
    }
    rep.c2_min_ratio = mn;
    c.c2 = o.safety / mn;
    say("c2 min raw ratio " + format_double(mn) + " -> " + format_double(c.c2));
  }

  // c₅: Hölder envelope at α = α₀ of each run
  {
    struct Series {
      double M_inf;
      std::vector<double> g;
    };
    std::vector<Series> series(runs.size());
    parallel_for(runs.size(), [&](std::size_t i) {
      const auto& r = runs[i];
      auto b = holder_budget(r.traj.reports.front().linf, r.f_linf, o.kappa, c);
      series[i].M_inf = b.M_inf;
      for (const auto& s : r.traj.snapshots) series[i].g.push_back(holder_seminorm(s, b.alpha0).value);
    });
    auto ok = [&](double c5) {
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& s = series[i];
        auto env = m_alpha_envelope(s.g[0], s.M_inf, o.kappa, c5, runs[i].traj.times);
        for (std::size_t j = 0; j < s.g.size(); ++j)
          if (s.g[j] * s.g[j] > env.M[j] * env.M[j] * (1.0 + 1e-12)) return false;
      }
      return true;
    };
    rep.c5_raw = calib::smallest_true(ok, 1e-4, 1e4);
    c.c5 = o.safety * rep.c5_raw;
    say("c5 raw " + format_double(rep.c5_raw) + " -> " + format_double(c.c5));
  }

  // c₇, c₈: pointwise gradient inequalities on relaxed forced states
  {
    double c7 = 0.0, c8 = 0.0;
    for (const auto& r : runs) {
      if (r.f_linf == 0.0) continue;
      const double as = std::min(c.eps1 * o.kappa * o.kappa / r.f_linf, 0.25);
      for (std::size_t k = 0; k < r.traj.times.size(); ++k) {
        const double t = r.traj.times[k];
        if (t < 0.5 * o.t_end - 1e-9 || std::fmod(t + 1e-9, 1.0) > 1e-6) continue;
        const auto& th = r.traj.snapshots[k];
        const double H = holder_seminorm(th, as).value;
        const double linf = r.traj.reports[k].linf;
        for (const auto& s : calib::gradient_samples(th, 8, 67)) {
          ++rep.gradient_points;
          if (!(s.D > 0.0) || !(s.grad > 0.0)) continue;
          c7 = std::max(c7, std::pow(s.grad, (3.0 - as) / (1.0 - as)) / (s.D * std::pow(H, 1.0 / (1.0 - as))));
          // sup over κ of (2a - κD/2)κ^{1/2}/b at κ = 4a/(3D)
          const double a = s.grad_u * s.grad * s.grad, b = std::sqrt(linf) * s.grad * s.grad * s.grad;
          c8 = std::max(c8, (4.0 * a / 3.0) * std::sqrt(4.0 * a / (3.0 * s.D)) / b);
        }
      }
    }
    rep.c7_raw = c7;
    rep.c8_raw = c8;
    c.c7 = o.safety * c7;
    c.c8 = o.safety * c8;
    say("c7 raw " + format_double(c7) + ", c8 raw " + format_double(c8));
  }

  // c₉: 2|⟨u·∇θ, Λ³θ⟩| ≤ C‖θ‖²_{H^{3/2}}‖θ‖_{H²}, c₉ = C²/2
  {
    double C = 0.0;
    std::vector<const SpectralField*> states;
    for (const auto& r : runs)
      for (const auto& th : r.traj.snapshots) states.push_back(&th);
    std::vector<SpectralField> extra;
    for (const auto& e : standard_corpus(o.seed0, "cal", o.n)) {
      extra.push_back(e.build());
      dealias_two_thirds(extra.back());
    }
    for (const auto& th : extra) states.push_back(&th);
    {
      for (const SpectralField* pth : states) {
        const auto& th = *pth;
        const double h32 = sobolev_norm(th, 1.5), h2 = sobolev_norm(th, 2.0);
        if (h32 == 0.0) continue;
        const auto nl = calib::exact_transport(th);
        const double I = sobolev_inner(nl, resample(th, 2 * th.grid().n()), 1.5);
        C = std::max(C, 2.0 * std::abs(I) / (h32 * h32 * h2));
      }
    }
    rep.c9_raw = 0.5 * C * C;
    c.c9 = o.safety * rep.c9_raw;
    say("c9 raw " + format_double(rep.c9_raw));
  }

  // c₁₀: ⟨ξ, N'(θ)ξ⟩_{H¹} ≤ (κ/2)‖ξ‖²_{H^{3/2}} + (c₁₀/κ)‖θ‖²_{H²}‖ξ‖²_{H¹} for every κ
  {
    TorusGrid g(2, o.n);
    std::vector<SpectralField> xis;
    for (double band : {1.5, 2.5, 4.0, 6.0, 9.0})
      for (std::uint64_t s = 0; s < 4; ++s) {
        auto x = random_band_field(g, band, o.seed0 + 500 + 10 * std::uint64_t(band) + s, 1.0);
        dealias_two_thirds(x);
        xis.push_back(x);
      }
    double best = 0.0;
    for (const auto& r : runs) {
      if (r.f_linf == 0.0) continue;
      for (std::size_t k = 0; k < r.traj.times.size(); ++k) {
        if (r.traj.times[k] < 0.5 * o.t_end - 1e-9 || std::fmod(r.traj.times[k] + 1e-9, 1.0) > 1e-6) continue;
        const auto& th = r.traj.snapshots[k];
        const double h2 = sobolev_norm(th, 2.0);
        std::vector<double> vals(xis.size() + 1, 0.0);
        auto probe = [&](const SpectralField& x) {
          const double T = sobolev_inner(resample(x, 2 * o.n), calib::exact_linearized_transport(th, x), 1.0);
          if (!(T > 0.0)) return 0.0;
          const double a = sobolev_inner(x, x, 1.5), b = h2 * h2 * sobolev_inner(x, x, 1.0);
          return T * T / (2.0 * a * b);
        };
        parallel_for(xis.size(), [&](std::size_t j) { vals[j] = probe(xis[j]); });
        vals.back() = probe(th);
        for (const auto& x : calib::adversarial_directions(th)) vals.push_back(probe(x));
        rep.tangent_samples += vals.size();
        for (double v : vals) best = std::max(best, v);
      }
    }
    rep.c10_raw = best;
    c.c10 = o.safety * best;
    say("c10 raw " + format_double(best));
  }

  // backward uniqueness budget on perturbed pairs
  {
    TorusGrid g(2, o.n);
    SolverConfig cfg;
    cfg.kappa = o.kappa;
    cfg.dt = o.dt;
    cfg.t_end = 5.0;
    cfg.adaptive = false;
    RunOptions ro;
    ro.snapshot_interval = 0.05;
    double C = 0.0;
    for (std::uint64_t p = 0; p < 5; ++p) {
      auto th = random_band_field(g, 4.0, o.seed0 + 200 + p, 1.0);
      auto d = random_band_field(g, 4.0, o.seed0 + 300 + p, 1e-2);
      auto f = random_band_field(g, 3.0, o.seed0 + 400 + p, 1.0);
      dealias_two_thirds(th);
      dealias_two_thirds(d);
      dealias_two_thirds(f);
      auto a = run(th, cfg, f, {}, ro), b = run(th + d, cfg, f, {}, ro);
      auto mon = log_convexity_monitor(a, b, 1.0);
      for (const auto& s : mon.samples) {
        const double integral = s.budget - mon.samples.front().w;
        if (integral > 0.0) C = std::max(C, (s.w - mon.samples.front().w) / integral);
      }
      ++rep.pairs;
    }
    rep.backward_raw = C;
    c.backward_C = o.safety * C;
    say("backward C raw " + format_double(C));
  }
  return rep;
}

/// Constants file with the calibration record as comments.
inline void write_constants(std::ostream& os, const CalibrationReport& r, const CalibrationOptions& o) {
  const auto& c = r.constants;
  os << "# universal constants, calibrated by `sqg calibrate`\n"
     << "# grid n = " << o.n << ", kappa = " << format_double(o.kappa) << ", dt = " << format_double(o.dt)
     << ", horizon = " << format_double(o.t_end) << ", seeds from " << o.seed0 << ", safety factor "
     << format_double(o.safety) << "\n"
     << "# runs = " << r.runs << ", corpus fields = " << r.corpus_fields << " x shifts = " << r.shifts
     << ", gradient points = " << r.gradient_points << ", tangent samples = " << r.tangent_samples
     << ", pairs = " << r.pairs << "\n"
     << "# raw: c0 = " << format_double(r.c0_raw) << ", min lower-bound ratio = " << format_double(r.c2_min_ratio)
     << ", c5 = " << format_double(r.c5_raw) << ", c7 = " << format_double(r.c7_raw)
     << ", c8 = " << format_double(r.c8_raw) << ", c9 = " << format_double(r.c9_raw)
     << ", c10 = " << format_double(r.c10_raw) << ", backward C = " << format_double(r.backward_raw) << "\n"
     << "version = " << c.version << "\n"
     << "c0 = " << format_double(c.c0) << "\n"
     << "eps0 = " << format_double(c.eps0) << "\n"
     << "eps1 = " << format_double(c.eps1) << "\n"
     << "c2 = " << format_double(c.c2) << "\n"
     << "c5 = " << format_double(c.c5) << "\n"
     << "c7 = " << format_double(c.c7) << "\n"
     << "c8 = " << format_double(c.c8) << "\n"
     << "c9 = " << format_double(c.c9) << "\n"
     << "c10 = " << format_double(c.c10) << "\n"
     << "c11 = " << format_double(c.c11) << "\n"
     << "backward_C = " << format_double(c.backward_C) << "\n";
}

}  // namespace sqg
