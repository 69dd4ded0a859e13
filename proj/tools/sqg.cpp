#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sqg/commands.hpp"

int main(int argc, char** argv) {
  using namespace sqg::cli;
  CLI::App app{"Forced critical SQG simulator and diagnostics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sqg::sqg_version);

  CommandArgs args;
  std::string out = args.out.string();
  std::uint64_t seed = 0;
  long long n_max = 0;

  auto common = [&](CLI::App* sub, bool config) {
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--seed-override", seed, "Replace run.seed (offset of every random seed)");
    sub->add_option("--threads", args.threads, "Worker threads (1 = serial, bit-reproducible)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    if (config) {
      sub->add_option("--config", args.config_path, "Config file or manifest.json of an earlier run");
      sub->add_option("--preset", args.preset, "Shipped scenario")
          ->check(CLI::IsMember(sqg::preset_names()));
    }
  };
  auto* simulate = app.add_subcommand("simulate", "Integrate forced critical SQG on the 2-torus");
  common(simulate, true);
  auto* burgers = app.add_subcommand("burgers", "Integrate 1D critical Burgers");
  common(burgers, true);
  auto* dimension = app.add_subcommand("dimension", "Volume/trace run and dimension bound");
  common(dimension, true);
  dimension->add_option("--n-max", n_max, "Number of tangent directions (default: dimension.ensemble)");
  auto* verify = app.add_subcommand("verify-kernels", "Fractional-Laplacian identity and inequality checks");
  common(verify, false);
  verify->add_option("--corpus", args.corpus_path, "Corpus CSV (default: shipped data/corpus.csv)");
  auto* calibrate = app.add_subcommand("calibrate", "Re-derive the universal constants");
  common(calibrate, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? sqg::exit_ok : sqg::exit_usage;
  }
  args.out = out;
  auto* chosen = app.get_subcommands().front();
  if (chosen->count("--seed-override")) args.seed_override = seed;
  if (dimension->count("--n-max")) args.n_max = n_max;

  if (chosen == simulate) return dispatch(cmd_simulate, args);
  if (chosen == burgers) return dispatch(cmd_burgers, args);
  if (chosen == dimension) return dispatch(cmd_dimension, args);
  if (chosen == verify) return dispatch(cmd_verify_kernels, args);
  return dispatch(cmd_calibrate, args);
}
