#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "linsamp/config.hpp"
#include "linsamp/parallel.hpp"
#include "linsamp/runner.hpp"
#include "linsamp/version.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool wants_inputs) {
  cmd->add_option("--config", args.config_path, "Experiment config file");
  cmd->add_option("--out", args.out_dir, "Output directory")->required();
  cmd->add_option("--seed", args.seed, "Root seed (overrides the config)")
      ->each([&args](const std::string&) { args.seed_given = true; });
  cmd->add_option("--threads", args.threads,
                  "Worker cap (0 = hardware default)");
  if (wants_inputs)
    cmd->add_option("inputs", args.inputs, "Input CSV files");
}

int dispatch(linsamp::runner::Kind kind, const CommonArgs& args) {
  linsamp::runner::ExperimentConfig experiment;
  experiment.kind = kind;
  if (!args.config_path.empty())
    experiment.options = linsamp::Config::parse_file(args.config_path);
  experiment.out_dir = args.out_dir;
  experiment.seed = args.seed_given
                        ? args.seed
                        : static_cast<std::uint64_t>(experiment.options.get_int(
                              "experiment.seed", 0));
  for (const auto& input : args.inputs) experiment.inputs.emplace_back(input);

  const int threads =
      args.threads > 0
          ? args.threads
          : static_cast<int>(experiment.options.get_int("experiment.threads", 0));
  linsamp::set_max_threads(threads);

  const auto result = linsamp::runner::run_experiment(experiment);
  for (const auto& message : result.messages) {
    if (result.ok)
      std::cout << message << "\n";
    else
      std::cerr << "error: " << message << "\n";
  }
  if (result.degraded) std::cerr << "error: run marked degraded\n";
  return result.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sample-based inference and hyperparameter selection for "
               "large conjugate Gaussian linear models"};
  app.set_version_flag("--version", linsamp::kVersion);
  app.require_subcommand(1);

  struct Registered {
    linsamp::runner::Kind kind;
    CommonArgs args;
  };
  std::vector<std::pair<CLI::App*, Registered*>> commands;
  auto add = [&](const std::string& name, const std::string& help,
                 linsamp::runner::Kind kind, bool wants_inputs) {
    auto* registered = new Registered{kind, {}};
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, registered->args, wants_inputs);
    commands.emplace_back(cmd, registered);
  };

  add("gen-data", "Generate a synthetic problem instance",
      linsamp::runner::Kind::kGenData, false);
  add("exact", "Exact dense EM on a problem instance",
      linsamp::runner::Kind::kExact, false);
  add("sample", "Sample-then-optimize fidelity traces (L vs L')",
      linsamp::runner::Kind::kSampleFidelity, false);
  add("em", "Stochastic EM hyperparameter selection",
      linsamp::runner::Kind::kEm, false);
  add("dual-em", "Kernelised (Matheron + PCG) EM",
      linsamp::runner::Kind::kDualDemo, false);
  add("linlap-demo", "Built-in linearised-Laplace toy demo",
      linsamp::runner::Kind::kLinlapDemo, false);
  add("eval", "Distance metrics between prediction files",
      linsamp::runner::Kind::kEval, true);
  add("plotdata", "Emit gnuplot-style series from CSV traces",
      linsamp::runner::Kind::kPlotData, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (auto& [cmd, registered] : commands) {
    if (cmd->parsed()) {
      try {
        return dispatch(registered->kind, registered->args);
      } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 1;
      }
    }
  }
  return 0;
}
