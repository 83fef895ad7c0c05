#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "linsamp/config.hpp"
#include "linsamp/design.hpp"
#include "linsamp/noise.hpp"
#include "linsamp/synthetic.hpp"

namespace linsamp::runner {

enum class Kind {
  kGenData,
  kExact,
  kSampleFidelity,
  kEm,
  kDualDemo,
  kLinlapDemo,
  kEval,
  kPlotData,
};

Kind kind_from_string(const std::string& name);
std::string kind_to_string(Kind kind);

struct ExperimentConfig {
  Kind kind = Kind::kGenData;
  Config options;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;  // plotdata / eval file args
};

struct RunResult {
  bool ok = true;
  bool degraded = false;
  std::vector<std::string> messages;
  std::vector<std::string> outputs;  // file names relative to out_dir

  int exit_code() const { return ok && !degraded ? 0 : 1; }
};

// Loaded problem instance (from gen-data output files or an inline spec).
struct Problem {
  std::shared_ptr<const DesignOperator> op;
  NoisePrecision noise;
  Eigen::VectorXd y;
};

// Reads phi.csv / phi_coo.csv, b_blocks.csv and y.csv from a directory.
Problem load_problem(const std::filesystem::path& dir);

// Builds the instance referenced by the config: problem.dir when present,
// otherwise an inline synthetic spec under problem.*.
Problem resolve_problem(const Config& config, std::uint64_t seed);
SyntheticSpec spec_from_config(const Config& config);

// Dispatches one experiment, writes its artifact files plus a run.json
// manifest, and never throws: failures come back in the result.
RunResult run_experiment(const ExperimentConfig& experiment);

// gnuplot-style series emission: one whitespace-separated .dat per value
// column, plus a plot manifest.
std::vector<std::string> emit_plotdata(
    const std::vector<std::filesystem::path>& csv_inputs,
    const std::filesystem::path& out_dir);

}  // namespace linsamp::runner
