#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sqg/tangent.hpp"

using namespace sqg;

namespace sqg {
inline void PrintTo(Integrator i, std::ostream* os) { *os << to_string(i); }
}  // namespace sqg
using std::numbers::pi;

namespace {

SolverConfig fixed(double dt, double t_end, double kappa = 1.0) {
  SolverConfig c;
  c.dt = dt;
  c.t_end = t_end;
  c.kappa = kappa;
  return c;
}

/// H¹-normalized real mode: cos(k·x) or sin(k·x).
SpectralField unit_mode(const TorusGrid& g, int k1, int k2, bool sine) {
  SpectralField f(g);
  const cplx c = sine ? cplx(0.0, -0.5) : cplx(0.5, 0.0);
  f.coeff(k1, k2) += c;
  f.coeff(-k1, -k2) += std::conj(c);
  return (1.0 / sobolev_norm(f, 1.0)) * f;
}

SpectralField band_limited(const TorusGrid& g, double band, std::uint64_t seed, double linf) {
  auto f = random_band_field(g, band, seed, linf);
  dealias_two_thirds(f);
  return f;
}

double rel_diff(const SpectralField& a, const SpectralField& b) {
  return sobolev_norm(a - b, 0.0) / std::max(sobolev_norm(b, 0.0), 1e-300);
}

}  // namespace

TEST(LinearizedRhs, ZeroBaseIsDissipation) {
  TorusGrid g(2, 16);
  auto xi = band_limited(g, 4, 3, 1.0);
  auto a = linearized_rhs(SpectralField(g), xi, 0.7);
  auto expect = -0.7 * fractional_laplacian(xi, 1.0);
  EXPECT_LE(sobolev_norm(a - expect, 0.0), 1e-13 * sobolev_norm(expect, 0.0));
}

TEST(LinearizedRhs, ZeroDirection) {
  TorusGrid g(2, 16);
  auto th = band_limited(g, 4, 5, 1.0);
  EXPECT_EQ(sobolev_norm(linearized_rhs(th, SpectralField(g), 1.0), 0.0), 0.0);
}

TEST(LinearizedRhs, DirectionalDerivativeOfNonlinearity) {
  TorusGrid g(2, 32);
  auto th = band_limited(g, 5, 11, 1.0);
  auto xi = band_limited(g, 5, 12, 1.0);
  const double kappa = 1.0;
  const auto lin = linearized_rhs(th, xi, kappa) + kappa * fractional_laplacian(xi, 1.0);
  std::vector<double> err;
  for (double eps : {1e-3, 1e-4}) {
    auto fd = nonlinear_term(th + eps * xi) - nonlinear_term(th);
    fd *= 1.0 / eps;
    err.push_back(sobolev_norm(fd - lin, 0.0));
  }
  // O(ε): the remainder is ε·N(ξ) exactly, so the error scales by 10 between the two steps
  EXPECT_NEAR(err[1] / err[0], 0.1, 0.01);
  EXPECT_NEAR(err[0], 1e-3 * sobolev_norm(nonlinear_term(xi), 0.0), 1e-9);
}

TEST(LinearizedRhs, Preconditions) {
  TorusGrid g(2, 16), h(2, 32);
  EXPECT_THROW(linearized_rhs(SpectralField(g), SpectralField(h), 1.0), PreconditionError);
  SpectralField m(g);
  m.coeff(0, 0) = 1.0;
  EXPECT_THROW(linearized_rhs(SpectralField(g), m, 1.0), PreconditionError);
}

class TangentStepTest : public ::testing::TestWithParam<Integrator> {};

TEST_P(TangentStepTest, HeatDecay) {
  TorusGrid g(2, 16);
  auto cfg = fixed(1e-3, 1.0);
  cfg.integrator = GetParam();
  Stepper st(g, cfg, SpectralField(g));
  SpectralField theta(g);
  std::vector<SpectralField> xs{cosine_mode(g, 1, 0, 1.0)};
  for (int i = 0; i < 1000; ++i) advance(st, theta, xs, 1e-3);
  const auto expect = cosine_mode(g, 1, 0, std::exp(-1.0));
  auto d = (xs[0] - expect).values();
  double m = 0.0;
  for (double v : d) m = std::max(m, std::abs(v));
  EXPECT_LE(m, 1e-6);
}

TEST_P(TangentStepTest, LinearityAlongForcedBase) {
  TorusGrid g(2, 32);
  auto cfg = fixed(5e-3, 1.0);
  cfg.integrator = GetParam();
  Stepper st(g, cfg, band_limited(g, 3, 21, 1.0));
  auto theta = band_limited(g, 4, 22, 1.0);
  auto x1 = band_limited(g, 4, 23, 1.0), x2 = band_limited(g, 4, 24, 1.0);
  std::vector<SpectralField> xs{x1, 2.0 * x1, x2, x1 + x2, SpectralField(g)};
  for (int i = 0; i < 100; ++i) advance(st, theta, xs, 5e-3);
  EXPECT_LE(rel_diff(xs[1], 2.0 * xs[0]), 1e-10);
  EXPECT_LE(rel_diff(xs[3], xs[0] + xs[2]), 1e-10);
  EXPECT_EQ(sobolev_norm(xs[4], 0.0), 0.0);
}

TEST_P(TangentStepTest, MatchesFiniteDifferenceOfStepMap) {
  TorusGrid g(2, 32);
  auto cfg = fixed(1e-2, 1.0);
  cfg.integrator = GetParam();
  Stepper st(g, cfg, band_limited(g, 3, 31, 1.0));
  auto theta = band_limited(g, 4, 32, 1.0);
  auto xi = band_limited(g, 4, 33, 1.0);
  auto base = st.step_detailed(theta, 1e-2);
  auto tan = tangent_step(st, theta, base, xi, 1e-2);
  std::vector<double> err;
  for (double eps : {1e-3, 1e-4}) {
    auto fd = st.step(theta + eps * xi, 1e-2) - base.next;
    fd *= 1.0 / eps;
    err.push_back(sobolev_norm(fd - tan, 0.0) / sobolev_norm(tan, 0.0));
  }
  EXPECT_LE(err[0], 1e-4);
  EXPECT_NEAR(err[1] / err[0], 0.1, 0.02);
}

INSTANTIATE_TEST_SUITE_P(Integrators, TangentStepTest, ::testing::Values(Integrator::imex_cn, Integrator::etdrk2),
                         [](const auto& info) { return std::string(info.param == Integrator::imex_cn ? "ImexCn" : "Etdrk2"); });

TEST(GramSchmidt, UnitModesAreAlreadyOrthonormal) {
  TorusGrid g(2, 16);
  std::vector<SpectralField> xs{unit_mode(g, 1, 0, false), unit_mode(g, 1, 0, true), unit_mode(g, 0, 1, false),
                                unit_mode(g, 0, 1, true)};
  auto r = h1_gram_schmidt(xs);
  EXPECT_NEAR(r.log_increment, 0.0, 1e-14);
  for (std::size_t j = 0; j < xs.size(); ++j) EXPECT_LE(rel_diff(r.frame[j], xs[j]), 1e-14);
}

TEST(GramSchmidt, SingleVector) {
  TorusGrid g(2, 16);
  auto xi = 3.0 * unit_mode(g, 2, 1, false);
  auto r = h1_gram_schmidt({xi});
  EXPECT_NEAR(r.log_increment, std::log(3.0), 1e-14);
  EXPECT_LE(rel_diff(r.frame[0], (1.0 / 3.0) * xi), 1e-14);
}

TEST(GramSchmidt, RandomFrameIsOrthonormal) {
  TorusGrid g(2, 16);
  std::vector<SpectralField> xs{band_limited(g, 4, 1, 1.0), band_limited(g, 4, 2, 1.0), band_limited(g, 4, 3, 1.0)};
  auto r = h1_gram_schmidt(xs);
  auto G = h1_gram(r.frame);
  EXPECT_LE((G - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  // log det of the Gram matrix is twice the log-volume
  EXPECT_NEAR(std::log(h1_gram(xs).determinant()), 2.0 * r.log_increment, 1e-10);
}

TEST(GramSchmidt, RankDeficiencyReportsIndex) {
  TorusGrid g(2, 16);
  auto a = band_limited(g, 4, 1, 1.0), b = band_limited(g, 4, 2, 1.0);
  try {
    h1_gram_schmidt({a, b, a + 2.0 * b});
    FAIL() << "expected RankDeficientError";
  } catch (const RankDeficientError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
  EXPECT_TRUE(h1_gram_schmidt({}).frame.empty());
}

TEST(GramSchmidt, IllConditionedInputRejected) {
  TorusGrid g(2, 16);
  auto a = unit_mode(g, 1, 0, false), b = unit_mode(g, 0, 1, false);
  EXPECT_THROW(h1_gram_schmidt({a, a + 1e-7 * b}), PreconditionError);
  EXPECT_NO_THROW(h1_gram_schmidt({a, a + 1e-5 * b}));
}

TEST(Trace, ZeroBaseFourUnitModes) {
  TorusGrid g(2, 16);
  std::vector<SpectralField> fr{unit_mode(g, 1, 0, false), unit_mode(g, 1, 0, true), unit_mode(g, 0, 1, false),
                                unit_mode(g, 0, 1, true)};
  EXPECT_NEAR(trace_Pn_A(SpectralField(g), fr, 1.0), -4.0, 1e-12);
  EXPECT_NEAR(trace_Pn_A(SpectralField(g), fr, 0.3), -1.2, 1e-12);
  fr.push_back(unit_mode(g, 1, 1, false));
  fr.push_back(unit_mode(g, 1, -1, true));
  EXPECT_NEAR(trace_Pn_A(SpectralField(g), fr, 1.0), -(4.0 + 2.0 * std::sqrt(2.0)), 1e-12);
  EXPECT_EQ(trace_Pn_A(SpectralField(g), {}, 1.0), 0.0);
}

TEST(Trace, ZeroBaseMatchesLatticeEigenvalueSums) {
  TorusGrid g(2, 16);
  // the 12 smallest eigenvalues with multiplicity: |k|² = 1,1,1,1,2,2,2,2,4,4,4,4
  std::vector<SpectralField> fr;
  for (auto [k1, k2] : std::vector<std::pair<int, int>>{{1, 0}, {0, 1}, {1, 1}, {1, -1}, {2, 0}, {0, 2}}) {
    fr.push_back(unit_mode(g, k1, k2, false));
    fr.push_back(unit_mode(g, k1, k2, true));
  }
  // reorder so the prefix sums follow the sorted eigenvalues
  std::swap(fr[1], fr[2]);
  auto tr = trace_prefix(SpectralField(g), fr, 1.0);
  const auto ev = lattice_eigenvalues_sq(12);
  double acc = 0.0;
  for (std::size_t m = 0; m < 12; ++m) {
    acc += std::sqrt(double(ev[m]));
    EXPECT_NEAR(tr[m], -acc, 1e-12) << "m = " << m + 1;
  }
}

TEST(Trace, TransportPartIsFrameInvariant) {
  TorusGrid g(2, 32);
  auto th = band_limited(g, 5, 41, 1.0);
  std::vector<SpectralField> xs{band_limited(g, 4, 42, 1.0), band_limited(g, 4, 43, 1.0)};
  auto a = h1_gram_schmidt(xs).frame;
  auto b = h1_gram_schmidt({xs[1], xs[0]}).frame;
  EXPECT_NEAR(trace_Pn_A(th, a, 1.0), trace_Pn_A(th, b, 1.0), 1e-10 * std::abs(trace_Pn_A(th, a, 1.0)));
}

TEST(VolumeTrace, UnforcedRunSettlesOnLowestModes) {
  TorusGrid g(2, 16);
  auto cfg = fixed(1e-2, 0.0);
  VolumeTraceOptions opt;
  opt.n = 6;
  opt.t_end = 16.0;
  auto res = volume_and_trace_run(band_limited(g, 3, 51, 0.5), SpectralField(g), cfg, opt);
  ASSERT_TRUE(res.empirical_N);
  EXPECT_EQ(*res.empirical_N, 1u);
  EXPECT_TRUE(res.converged);
  const double expect[] = {1, 2, 3, 4, 4 + std::sqrt(2.0), 4 + 2 * std::sqrt(2.0)};
  const auto& last = res.trace.samples.back().trace;
  for (std::size_t m = 0; m < 6; ++m) EXPECT_NEAR(last[m], -expect[m], 1e-3) << "m = " << m + 1;
}

TEST(VolumeTrace, LogVolumeMatchesTraceIntegral) {
  TorusGrid g(2, 32);
  auto cfg = fixed(2.5e-3, 0.0);
  VolumeTraceOptions opt;
  opt.n = 4;
  opt.t_end = 2.0;
  auto force = band_limited(g, 3, 61, 2.0);
  auto res = volume_and_trace_run(band_limited(g, 4, 62, 1.0), force, cfg, opt);
  EXPECT_GT(res.reorthonormalizations, 0u);
  EXPECT_EQ(res.logV[0] - res.logV[0], res.trace_integral[0]);
  for (std::size_t i = 1; i < res.times.size(); ++i) {
    const double d = res.logV[i] - res.logV[0] - res.trace_integral[i];
    ASSERT_LE(std::abs(d), 1e-4 * res.times[i]) << "t = " << res.times[i];
  }
}

TEST(VolumeTrace, DoublingKappaDoesNotRaiseEmpiricalN) {
  TorusGrid g(2, 32);
  auto force = band_limited(g, 3, 71, 4.0);
  VolumeTraceOptions opt;
  opt.n = 6;
  opt.t_end = 4.0;
  opt.relax_time = 2.0;
  std::size_t prev = opt.n + 1;
  for (double kappa : {0.25, 0.5, 1.0}) {
    auto cfg = fixed(1e-2, 0.0, kappa);
    auto res = volume_and_trace_run(band_limited(g, 4, 72, 1.0), force, cfg, opt);
    const std::size_t n = res.empirical_N ? *res.empirical_N : opt.n + 1;
    EXPECT_LE(n, prev) << "kappa = " << kappa;
    prev = n;
  }
}

TEST(VolumeTrace, Preconditions) {
  TorusGrid g(2, 16);
  VolumeTraceOptions opt;
  opt.n = 0;
  EXPECT_THROW(volume_and_trace_run(SpectralField(g), SpectralField(g), fixed(1e-2, 0), opt), PreconditionError);
  opt.n = 2;
  EXPECT_THROW(volume_and_trace_run(SpectralField(TorusGrid(1, 16)), SpectralField(TorusGrid(1, 16)), fixed(1e-2, 0),
                                    opt),
               UnsupportedError);
}

TEST(TraceCsv, Format) {
  TraceLog log;
  log.samples = {{0.0, {-1.0, -2.0}}, {1.0, {-3.0, -4.0}}};
  char* buf = nullptr;
  std::size_t len = 0;
  std::FILE* f = open_memstream(&buf, &len);
  write_trace_csv(f, log);
  std::fclose(f);
  EXPECT_EQ(std::string(buf, len), "t,m,trace_m,running_avg_m\n0,1,-1,-1\n0,2,-2,-2\n1,1,-3,-2\n1,2,-4,-3\n");
  std::free(buf);
}

TEST(DimensionBound, UnitArgument) {
  auto b = dimension_bound_from_MA(1.0, 1.0, 1.0, 1.0);
  EXPECT_EQ(b.N, 1u);
  EXPECT_FALSE(b.saturated);
  // the curve vanishes at m = 1 when the argument is exactly 1
  ASSERT_TRUE(b.curve_negative_at_N);
  EXPECT_FALSE(*b.curve_negative_at_N);
  EXPECT_EQ(b.curve(1.0), 0.0);
}

TEST(DimensionBound, FourthPowerInMA) {
  auto a = dimension_bound_from_MA(1.0, std::sqrt(10.0 / 3.0), 1.5, 2.0);  // x = 10
  auto b = dimension_bound_from_MA(1.0, 2.0 * std::sqrt(10.0 / 3.0), 1.5, 2.0);
  EXPECT_EQ(a.N, 100u);
  EXPECT_EQ(b.N, 1600u);
  auto c = dimension_bound_from_MA(2.0, 3.7, 0.9, 2.0);
  const double x = 0.9 * 2.0 * 3.7 * 3.7 / 4.0;
  EXPECT_EQ(c.N, std::uint64_t(std::ceil(x * x)));
  ASSERT_TRUE(c.curve_negative_at_N);
  EXPECT_TRUE(*c.curve_negative_at_N);
  EXPECT_LT(c.curve(double(c.N)), 0.0);
  EXPECT_GE(c.curve(double(c.N - 1)), 0.0);
}

TEST(DimensionBound, LogDomainSaturation) {
  auto b = dimension_bound(1.0, 400.0, 2.0, 2.0);
  EXPECT_TRUE(b.saturated);
  EXPECT_NEAR(b.log_N, 2.0 * (400.0 + std::log(4.0)), 1e-9);
  ASSERT_TRUE(b.curve_negative_at_N);
  EXPECT_TRUE(*b.curve_negative_at_N);
  EXPECT_TRUE(b.curve_negative_log(b.log_N + 1e-7));
  EXPECT_FALSE(b.curve_negative_log(b.log_N - 1e-7));
  EXPECT_THROW(dimension_bound(1.0, 0.0, 0.0, 1.0), PreconditionError);
}

TEST(DimensionBound, LatticeCalibrationOfC11) {
  // independent route: for each value s = |k|², the worst index is the lattice count
  // #{k ≠ 0 : |k|² ≤ s}, so c₁₁² = max_s count(s)/s over values reached by the first 10⁴ points
  auto count_le = [](std::int64_t s) {
    std::int64_t c = 0;
    const auto r = std::int64_t(std::sqrt(double(s))) + 1;
    for (std::int64_t a = -r; a <= r; ++a) {
      const std::int64_t rem = s - a * a;
      if (rem < 0) continue;
      std::int64_t b = std::int64_t(std::sqrt(double(rem)));
      while (b * b > rem) --b;
      while ((b + 1) * (b + 1) <= rem) ++b;
      c += 2 * b + 1;
    }
    return c - 1;
  };
  const auto ev = lattice_eigenvalues_sq(10000);
  double best = 0.0;
  for (std::int64_t s = 1; s <= ev.back(); ++s) {
    const std::int64_t c = std::min<std::int64_t>(count_le(s), 10000);
    if (c > count_le(s - 1) && count_le(s - 1) < 10000) best = std::max(best, double(c) / double(s));
  }
  EXPECT_EQ(c11_from_lattice(10000), std::sqrt(best));
  EXPECT_EQ(ev[0], 1);
  EXPECT_EQ(ev[4], 2);
  EXPECT_EQ(ev[8], 4);
}

TEST(Frechet, ZeroDirectionHasNoResidual) {
  TorusGrid g(2, 16);
  auto curves = frechet_residual(band_limited(g, 3, 81, 1.0), SpectralField(g), SpectralField(g), fixed(1e-2, 0),
                                 {0.5}, {1e-1, 1e-2});
  for (const auto& p : curves[0].points) EXPECT_EQ(p.ratio, 0.0);
}

TEST(Frechet, ZeroBaseIsQuadratic) {
  TorusGrid g(2, 32);
  auto curves = frechet_residual(SpectralField(g), band_limited(g, 4, 82, 1.0), SpectralField(g), fixed(1e-2, 0),
                                 {0.5, 1.0, 2.0}, {1e-1, 1e-2, 1e-3, 1e-4});
  for (const auto& c : curves) {
    EXPECT_NEAR(c.slope, 1.0, 0.1) << "t = " << c.t;
    EXPECT_TRUE(c.decreasing);
  }
}

TEST(Frechet, ForcedRunIsSuperlinear) {
  TorusGrid g(2, 32);
  auto force = band_limited(g, 3, 83, 2.0);
  auto curves = frechet_residual(band_limited(g, 4, 84, 1.0), band_limited(g, 4, 85, 1.0), force, fixed(1e-2, 0),
                                 {0.5, 1.0, 2.0}, {1e-1, 1e-2, 1e-3, 1e-4});
  for (const auto& c : curves) {
    EXPECT_GE(c.slope, 0.5) << "t = " << c.t;
    EXPECT_TRUE(c.decreasing);
  }
}

TEST(Continuity, IdenticalDataIsGuarded) {
  TorusGrid g(2, 16);
  auto r = continuity_test(band_limited(g, 3, 91, 1.0), SpectralField(g), SpectralField(g), fixed(1e-2, 0), {1.0});
  EXPECT_EQ(r.status, ContinuityResult::Status::identical);
  EXPECT_TRUE(r.ratios.empty());
}

TEST(Continuity, SingleModeFamily) {
  TorusGrid g(2, 16);
  const double delta = 1e-3, kappa = 0.8;
  auto r = continuity_test(cosine_mode(g, 1, 0, 1.0), cosine_mode(g, 1, 0, delta), SpectralField(g),
                           fixed(1e-3, 0, kappa), {0.0, 0.5, 1.0, 2.0});
  ASSERT_EQ(r.ratios.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(r.ratios[i], std::exp(-kappa * r.times[i]), 1e-6);
    EXPECT_LE(r.ratios[i], 1.0 + 1e-12);
  }
  EXPECT_EQ(r.rate, 0.0);
  EXPECT_TRUE(r.bounded);
}

TEST(Continuity, ForcedRunHasFiniteGrowth) {
  TorusGrid g(2, 32);
  auto th = band_limited(g, 4, 92, 1.0);
  auto p = band_limited(g, 4, 93, 1.0);
  p *= 1e-3 / sobolev_norm(p, 1.0);
  auto r = continuity_test(th, p, band_limited(g, 3, 94, 2.0), fixed(1e-2, 0), {0.5, 1.0, 2.0});
  EXPECT_TRUE(r.finite);
  EXPECT_TRUE(r.bounded);
  EXPECT_LE(r.fitted(2.0), 1e3);
}
