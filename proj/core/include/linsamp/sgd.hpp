#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace linsamp {

class Rng;

// SGD with Nesterov momentum, gradient clipping, and a linear learning-rate
// decay by `decay_factor` over the first `decay_fraction` of the run.
struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  Eigen::Index batch_size = 100;
  int epochs = 20;
  double decay_factor = 330.0;
  double decay_fraction = 0.75;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t seed = 0;
  double divergence_factor = 1e6;

  void validate() const;
  double learning_rate_at(long step, long total_steps) const;
};

// Objective presented to the driver: an unbiased minibatch gradient plus a
// full objective used for divergence checks and traces.
struct SgdProblem {
  Eigen::Index dim = 0;
  Eigen::Index num_data = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& iterate,
                                std::span<const Eigen::Index> batch)>
      gradient;
  std::function<double(const Eigen::VectorXd& iterate)> objective;
};

struct SgdTraceRow {
  long step = 0;
  double objective = 0.0;
  double sample_error = -1.0;  // negative when no reference was supplied
};

// Runs epochs of shuffled without-replacement minibatches. Throws
// DivergenceError when the objective exceeds divergence_factor x initial.
Eigen::VectorXd sgd_loop(const SgdProblem& problem, const SgdConfig& config,
                         Eigen::VectorXd init, Rng& batch_rng,
                         std::vector<SgdTraceRow>* trace = nullptr,
                         const Eigen::VectorXd* reference = nullptr);

}  // namespace linsamp
