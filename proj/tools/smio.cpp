// Command-line front end for the interval observer toolkit.
//
//   smio run        --config PATH [--seed N] [--out DIR] [--horizon K]
//                   [--stability-mode oracle|learned]
//   smio stability  --config PATH [--out DIR] [--horizon K]
//                   [--stability-mode oracle|learned]
//   smio abstract   --config PATH [--seed N] [--out DIR]
//   smio dump-model --config PATH [--seed N] [--out DIR] [--horizon K]
//
// Precedence: command-line flags override SMIO_* environment variables,
// which override the config file. Exit codes: 0 success (for `run`:
// containment held for every seed), 1 configuration or usage error,
// 2 a run saw a containment violation or soundness fault.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "smio/harness.hpp"

namespace {

struct Args {
  std::string config_path;
  std::string out_dir;
  std::string stability_mode;
  long long seed = -1;
  int horizon = -1;  // -1: not given
};

void add_common(CLI::App* sub, Args& args, bool with_seed, bool with_horizon,
                bool with_stability_mode) {
  sub->add_option("--config", args.config_path, "configuration file")->required();
  sub->add_option("--out", args.out_dir, "output directory (overrides [output] dir)");
  if (with_seed) {
    sub->add_option("--seed", args.seed, "single seed (overrides [run] seeds)");
  }
  if (with_horizon) {
    sub->add_option("--horizon", args.horizon, "number of steps (overrides [run] horizon)");
  }
  if (with_stability_mode) {
    sub->add_option("--stability-mode", args.stability_mode,
                    "certificate input source: oracle or learned");
  }
}

smio::ExperimentConfig load(const Args& args) {
  smio::ExperimentConfig cfg = smio::parse_config_file(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.stability_mode.empty()) {
    if (args.stability_mode != "oracle" && args.stability_mode != "learned") {
      throw smio::ConfigError("--stability-mode: expected oracle or learned, got '" +
                              args.stability_mode + "'");
    }
    cfg.stability_mode = args.stability_mode;
  }
  if (args.seed >= 0) cfg.seeds = {static_cast<uint64_t>(args.seed)};
  if (args.horizon != -1) {
    if (args.horizon < 1) throw smio::ConfigError("--horizon must be >= 1");
    cfg.horizon = args.horizon;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simultaneous interval observation of states and unknown inputs"};
  app.require_subcommand(1);

  Args args;
  CLI::App* run = app.add_subcommand("run", "simulate, observe and write per-seed traces");
  add_common(run, args, true, true, true);
  CLI::App* stability =
      app.add_subcommand("stability", "compute the contraction certificate and verdict");
  add_common(stability, args, true, true, true);
  CLI::App* abstract_cmd =
      app.add_subcommand("abstract", "dump a 1-D slice of the affine bands");
  add_common(abstract_cmd, args, true, false, false);
  CLI::App* dump =
      app.add_subcommand("dump-model", "run the observer and write the learned input model");
  add_common(dump, args, true, true, false);

  CLI11_PARSE(app, argc, argv);

  try {
    const smio::ExperimentConfig cfg = load(args);
    const uint64_t seed = args.seed >= 0 ? static_cast<uint64_t>(args.seed) : cfg.seeds.front();
    if (run->parsed()) {
      return smio::run_experiment(cfg, std::cout);
    }
    if (stability->parsed()) {
      smio::run_stability(cfg, std::cout);
      return 0;
    }
    if (abstract_cmd->parsed()) {
      smio::run_abstract(cfg, seed, std::cout);
      return 0;
    }
    if (dump->parsed()) {
      smio::dump_model(cfg, seed, std::cout);
      return 0;
    }
  } catch (const smio::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
