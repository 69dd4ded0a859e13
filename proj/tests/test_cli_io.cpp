#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sqg/commands.hpp"

using namespace sqg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sqg_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

/// Runs the CLI binary; stdout and stderr go to files in `dir`.
int run_cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(SQG_CLI_PATH) + " " + args + " > " +
                          (dir / "stdout.txt").string() + " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

const char* zero_config = R"([run]
n = 16
dt = 0.01
t_end = 0.5
[initial]
kind = zero
[force]
kind = zero
)";

}  // namespace

// ---------------------------------------------------------------------------------------------
// Config format

TEST(Config, PresetsRoundTripThroughText) {
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    const auto text = to_text(c);
    EXPECT_EQ(to_text(parse_config_text(text)), text) << name;
  }
}

TEST(Config, UnknownPresetIsConfigError) { EXPECT_THROW(preset("nope"), ConfigError); }

TEST(Config, ParsesValuesAndComments) {
  const auto c = parse_config_text(R"(# comment
[run]
n = 64   # trailing
kappa = 0.5
integrator = etdrk2
[force]
kind = single_mode
amplitude = 2
[holder]
enabled = true
alpha = 0.05
)");
  EXPECT_EQ(c.n, 64);
  EXPECT_DOUBLE_EQ(c.solver.kappa, 0.5);
  EXPECT_EQ(c.solver.integrator, Integrator::etdrk2);
  EXPECT_EQ(c.force.kind, ForceSpec::Kind::single_mode);
  EXPECT_TRUE(c.holder);
  ASSERT_TRUE(c.holder_alpha.has_value());
  EXPECT_DOUBLE_EQ(*c.holder_alpha, 0.05);
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("[run]\nn = 16\nbogus = 1\n"), 3);
  EXPECT_EQ(line_of("[run]\n\n[nowhere]\n"), 3);
  EXPECT_EQ(line_of("n = 16\n"), 1);
  EXPECT_EQ(line_of("[run]\nkappa = fast\n"), 2);
  EXPECT_EQ(line_of("[run]\nn = 16.5\n"), 2);
  EXPECT_EQ(line_of("[run]\nn =\n"), 2);
  EXPECT_EQ(line_of("[run]\nintegrator = rk4\n"), 2);
  EXPECT_EQ(line_of("[run\n"), 1);
  EXPECT_EQ(line_of("[run]\nn\n"), 2);
}

TEST(Config, SemanticValidation) {
  EXPECT_THROW(parse_config_text("[run]\nkappa = -1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[run]\ndim = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[run]\nn = 48\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[run]\nsnapshot_interval = 0\n"), ConfigError);
}

TEST(Config, SeedOffsetsRandomFields) {
  auto c = preset("holder-corpus");
  const auto a = c.initial_field();
  c.seed = 2;
  const auto b = c.initial_field();
  EXPECT_GT(sobolev_norm(a - b, 0.0), 1e-3);
  c.seed = 1;
  EXPECT_EQ(sobolev_norm(a - c.initial_field(), 0.0), 0.0);
}

// ---------------------------------------------------------------------------------------------
// Corpus

TEST(Corpus, RoundTrip) {
  const auto entries = standard_corpus(5, "x", 16);
  std::stringstream ss;
  write_corpus(ss, entries);
  const auto back = parse_corpus(ss);
  ASSERT_EQ(back.size(), entries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, entries[i].id);
    EXPECT_EQ(back[i].seed, entries[i].seed);
    EXPECT_EQ(sobolev_norm(back[i].build() - entries[i].build(), 0.0), 0.0);
  }
}

TEST(Corpus, Errors) {
  std::stringstream bad_header("id,kind\n");
  EXPECT_THROW(parse_corpus(bad_header), ConfigError);
  std::stringstream bad_cols(std::string(corpus_header()) + "\na,random,16\n");
  try {
    parse_corpus(bad_cols);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2);
  }
  std::stringstream bad_kind(std::string(corpus_header()) + "\na,square,16,2,1,1,1,1,0,0\n");
  EXPECT_THROW(parse_corpus(bad_kind), ConfigError);
}

TEST(Corpus, ShippedCorpusIsMeanZeroAndNormalized) {
  const auto corpus = load_corpus(std::string(SQG_DATA_DIR) + "/corpus.csv");
  ASSERT_EQ(corpus.size(), 20u);
  for (const auto& e : corpus) {
    const auto f = e.build();
    EXPECT_TRUE(f.is_mean_zero()) << e.id;
    EXPECT_NEAR(lp_norm(f, LpOrder::infinity()), 1.0, 1e-12) << e.id;
  }
}

// ---------------------------------------------------------------------------------------------
// simulate

TEST(Simulate, ZeroDataGivesZeroCsv) {
  const auto dir = scratch("zero");
  put(dir / "zero.cfg", zero_config);
  ASSERT_EQ(run_cli("simulate --config " + (dir / "zero.cfg").string() + " --out " + (dir / "out").string(), dir), 0);
  const auto rows = read_csv(dir / "out" / "norms.csv");
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows)
    for (std::size_t k = 1; k < r.size(); ++k) EXPECT_EQ(r[k], 0.0);
}

TEST(Simulate, ExactDecayPresetFollowsExponential) {
  const auto dir = scratch("decay");
  ASSERT_EQ(run_cli("simulate --preset exact-decay --out " + (dir / "out").string(), dir), 0);
  const auto rows = read_csv(dir / "out" / "norms.csv");
  ASSERT_EQ(rows.size(), 11u);
  const double l2_0 = rows[0][1];
  EXPECT_NEAR(l2_0, std::sqrt(2.0) * std::numbers::pi, 1e-12);
  for (const auto& r : rows) EXPECT_NEAR(r[1] / l2_0, std::exp(-r[0]), 1e-5) << r[0];
}

TEST(Simulate, MalformedKeyExitsTwoWithLine) {
  const auto dir = scratch("badkey");
  put(dir / "bad.cfg", "[run]\nn = 16\nspeed = 3\n");
  EXPECT_EQ(run_cli("simulate --config " + (dir / "bad.cfg").string() + " --out " + (dir / "out").string(), dir), 2);
  const auto err = slurp(dir / "stderr.txt");
  EXPECT_NE(err.find("line 3"), std::string::npos) << err;
  EXPECT_NE(err.find("run.speed"), std::string::npos) << err;
}

TEST(Simulate, UsageErrors) {
  const auto dir = scratch("usage");
  EXPECT_EQ(run_cli("simulate --out " + (dir / "o").string(), dir), 2);
  EXPECT_EQ(run_cli("simulate --preset exact-decay --config x.cfg", dir), 2);
  EXPECT_EQ(run_cli("simulate --preset nonexistent", dir), 2);
  EXPECT_EQ(run_cli("simulate --preset burgers-basic --out " + (dir / "o").string(), dir), 2);
  EXPECT_EQ(run_cli("frobnicate", dir), 2);
  EXPECT_EQ(run_cli("", dir), 2);
}

TEST(Simulate, BlowupHasDistinctExitCode) {
  const auto dir = scratch("blowup");
  put(dir / "b.cfg", R"([run]
n = 16
dt = 1
t_end = 200
adaptive = false
dealias = none
[initial]
kind = random_band
amplitude = 200
band = 6
)");
  EXPECT_EQ(run_cli("simulate --config " + (dir / "b.cfg").string() + " --out " + (dir / "out").string(), dir), 3);
  EXPECT_TRUE(fs::exists(dir / "out" / "blowup_state.bin"));
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(m["exit_code"].get<int>(), 3);
}

TEST(Simulate, ManifestRecordsRun) {
  const auto dir = scratch("manifest");
  ASSERT_EQ(run_cli("simulate --preset steady-state --seed-override 7 --out " + (dir / "out").string(), dir), 0);
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["seed"].get<int>(), 7);
  EXPECT_EQ(m["version"], sqg_version);
  EXPECT_EQ(m["constants"]["hash"], file_hash(constants_path()));
  EXPECT_FALSE(m["finished"].is_null());
  EXPECT_GE(m["wall_seconds"].get<double>(), 0.0);
  for (const auto& o : m["outputs"]) EXPECT_TRUE(fs::exists(dir / "out" / o.get<std::string>())) << o;
  EXPECT_EQ(parse_config_text(m["config"].get<std::string>()).seed, 7u);
  std::size_t manifests = 0;
  for (const auto& e : fs::directory_iterator(dir / "out")) manifests += e.path().filename() == "manifest.json";
  EXPECT_EQ(manifests, 1u);
}

TEST(Simulate, RerunFromManifestIsByteIdentical) {
  const auto dir = scratch("rerun");
  ASSERT_EQ(run_cli("simulate --preset holder-corpus --out " + (dir / "a").string(), dir), 0);
  ASSERT_EQ(run_cli("simulate --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "b").string(),
                    dir),
            0);
  ASSERT_EQ(run_cli("simulate --config " + (dir / "a" / "manifest.json").string() + " --threads 3 --out " +
                        (dir / "c").string(),
                    dir),
            0);
  for (auto name : {"norms.csv", "holder.csv", "envelope_l2.csv", "envelope_l4.csv", "envelope_linf.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "c" / name)) << name;
  }
}

TEST(Simulate, ManifestOfAnotherCommandIsRejected) {
  const auto dir = scratch("wrongcmd");
  ASSERT_EQ(run_cli("burgers --preset burgers-basic --out " + (dir / "a").string(), dir), 0);
  EXPECT_EQ(run_cli("simulate --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "b").string(),
                    dir),
            2);
}

TEST(Simulate, ConstantsOverride) {
  const auto dir = scratch("constants");
  put(dir / "broken.txt", "version = 1\nc0 = 1\n");
  EXPECT_EQ(run_cli("simulate --preset exact-decay --out " + (dir / "o").string(), dir,
                    "SQG_CONSTANTS=" + (dir / "broken.txt").string()),
            2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("missing"), std::string::npos);
  fs::copy_file(constants_path(), dir / "copy.txt");
  EXPECT_EQ(run_cli("simulate --preset exact-decay --out " + (dir / "o").string(), dir,
                    "SQG_CONSTANTS=" + (dir / "copy.txt").string()),
            0);
}

// ---------------------------------------------------------------------------------------------
// verify-kernels

TEST(VerifyKernels, EmptyCorpusPassesWithWarning) {
  const auto dir = scratch("empty_corpus");
  put(dir / "c.csv", std::string(corpus_header()) + "\n");
  EXPECT_EQ(run_cli("verify-kernels --corpus " + (dir / "c.csv").string() + " --out " + (dir / "o").string(), dir), 0);
  EXPECT_NE(slurp(dir / "stderr.txt").find("warning"), std::string::npos);
}

TEST(VerifyKernels, NonMeanZeroFieldIsPreconditionError) {
  const auto dir = scratch("mean_corpus");
  put(dir / "c.csv", std::string(corpus_header()) + "\nm1,random,16,3,1,1,1,1,0,0.25\n");
  EXPECT_EQ(run_cli("verify-kernels --corpus " + (dir / "c.csv").string() + " --out " + (dir / "o").string(), dir), 2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("zero mean"), std::string::npos);
}

TEST(VerifyKernels, SmallCorpusPasses) {
  const auto dir = scratch("small_corpus");
  put(dir / "c.csv", std::string(corpus_header()) + "\na,random,16,3,4,1,1,1,0,0\nb,cosine,16,1,1,1,1,1,2,0\n");
  cli::CommandArgs a;
  a.corpus_path = (dir / "c.csv").string();
  a.out = dir / "o";
  std::ostringstream out, err;
  a.out_stream = &out;
  a.err_stream = &err;
  EXPECT_EQ(cli::dispatch(cli::cmd_verify_kernels, a), 0) << out.str() << err.str();
  const auto table = slurp(dir / "o" / "kernels.csv");
  EXPECT_NE(table.find("identity,a,alpha=0.5"), std::string::npos);
  EXPECT_NE(table.find("poincare,b,p=8"), std::string::npos);
  EXPECT_NE(table.find("lower_bound,a,shift=7"), std::string::npos);
  EXPECT_NE(table.find("D1_cos"), std::string::npos);
}

TEST(VerifyKernels, MissingCorpusIsUsageError) {
  const auto dir = scratch("missing_corpus");
  EXPECT_EQ(run_cli("verify-kernels --corpus " + (dir / "none.csv").string() + " --out " + (dir / "o").string(), dir),
            2);
}

// ---------------------------------------------------------------------------------------------
// dimension

TEST(Dimension, UnforcedRunReportsEmpiricalNOne) {
  const auto dir = scratch("dim_unforced");
  put(dir / "d.cfg", R"([run]
n = 16
dt = 0.01
[initial]
kind = random_band
band = 3
[dimension]
relax_time = 1
ensemble = 3
trace_time = 4
)");
  ASSERT_EQ(run_cli("dimension --config " + (dir / "d.cfg").string() + " --out " + (dir / "o").string(), dir), 0);
  const auto report = slurp(dir / "o" / "dimension_report.txt");
  EXPECT_NE(report.find("empirical_N = 1\n"), std::string::npos) << report;
  EXPECT_NE(report.find("N = 1\n"), std::string::npos) << report;
  EXPECT_NE(report.find("bound curve at N: negative"), std::string::npos) << report;
  const auto trace = slurp(dir / "o" / "trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "t,m,trace_m,running_avg_m");
}

TEST(Dimension, NMaxZeroIsUsageError) {
  const auto dir = scratch("dim_nmax");
  EXPECT_EQ(run_cli("dimension --preset dimension-sweep --n-max 0 --out " + (dir / "o").string(), dir), 2);
}

TEST(Dimension, RerunFromManifestIsByteIdentical) {
  const auto dir = scratch("dim_rerun");
  put(dir / "d.cfg", R"([run]
n = 16
dt = 0.01
[initial]
kind = random_band
band = 3
[force]
kind = random_band
band = 2
amplitude = 1
seed = 3
[dimension]
relax_time = 0.5
ensemble = 2
trace_time = 1
reorth_every = 5
)");
  ASSERT_EQ(run_cli("dimension --config " + (dir / "d.cfg").string() + " --n-max 3 --out " + (dir / "a").string(),
                    dir),
            0);
  ASSERT_EQ(run_cli("dimension --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "b").string(),
                    dir),
            0);
  EXPECT_EQ(slurp(dir / "a" / "trace.csv"), slurp(dir / "b" / "trace.csv"));
  EXPECT_EQ(slurp(dir / "a" / "volume.csv"), slurp(dir / "b" / "volume.csv"));
  EXPECT_NE(slurp(dir / "b" / "dimension_report.txt").find("tangents = 3"), std::string::npos);
}

TEST(Dimension, BoundForUnforcedRunIsOne) {
  const auto c = load_constants();
  const auto a = absorbing_constants(0.0, 0.0, 1.0, c);
  const auto b = dimension_bound_for(a, 1.0, c);
  EXPECT_FALSE(b.saturated);
  EXPECT_EQ(b.N, 1u);
  ASSERT_TRUE(b.curve_negative_at_N.has_value());
  EXPECT_TRUE(*b.curve_negative_at_N);
}

// ---------------------------------------------------------------------------------------------
// burgers

TEST(Burgers, ZeroPresetGivesZeroOutput) {
  const auto dir = scratch("burgers_zero");
  put(dir / "z.cfg", "[run]\ndim = 1\nn = 64\ndt = 0.01\nt_end = 0.3\n");
  ASSERT_EQ(run_cli("burgers --config " + (dir / "z.cfg").string() + " --out " + (dir / "o").string(), dir), 0);
  for (const auto& r : read_csv(dir / "o" / "norms.csv"))
    for (std::size_t k = 1; k < r.size(); ++k) EXPECT_EQ(r[k], 0.0);
}

TEST(Burgers, CosineDataHasNonIncreasingSupNorm) {
  const auto dir = scratch("burgers_cos");
  ASSERT_EQ(run_cli("burgers --preset burgers-basic --out " + (dir / "o").string(), dir), 0);
  const auto rows = read_csv(dir / "o" / "norms.csv");
  ASSERT_GT(rows.size(), 2u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i][3], rows[i - 1][3] * (1.0 + 1e-12)) << rows[i][0];
  EXPECT_LT(rows.back()[3], rows.front()[3]);
}

TEST(Burgers, HolderTrackingHasNoFalsifications) {
  const auto dir = scratch("burgers_holder");
  ASSERT_EQ(run_cli("burgers --preset burgers-basic --out " + (dir / "o").string(), dir), 0);
  const auto rows = read_csv(dir / "o" / "holder.csv");
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) EXPECT_EQ(r[3], 0.0) << r[0];
  EXPECT_NE(slurp(dir / "stdout.txt").find("samples above [theta0]^2 = 0"), std::string::npos);
}

TEST(Burgers, TwoDimensionalConfigIsUsageError) {
  const auto dir = scratch("burgers_2d");
  EXPECT_EQ(run_cli("burgers --preset exact-decay --out " + (dir / "o").string(), dir), 2);
}
