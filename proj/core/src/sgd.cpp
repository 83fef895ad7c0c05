#include "linsamp/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linsamp/errors.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {

void SgdConfig::validate() const {
  require(learning_rate > 0 && std::isfinite(learning_rate),
          "sgd: learning rate must be positive");
  require(momentum >= 0 && momentum < 1, "sgd: momentum must be in [0, 1)");
  require(batch_size > 0, "sgd: batch size must be positive");
  require(epochs > 0, "sgd: epochs must be positive");
  require(decay_factor >= 1, "sgd: decay factor must be >= 1");
  require(decay_fraction > 0 && decay_fraction <= 1,
          "sgd: decay fraction must lie in (0, 1]");
  require(clip_norm >= 0, "sgd: clip norm must be nonnegative");
  require(divergence_factor > 1, "sgd: divergence factor must exceed 1");
}

double SgdConfig::learning_rate_at(long step, long total_steps) const {
  const double floor = learning_rate / decay_factor;
  const double span = decay_fraction * static_cast<double>(total_steps);
  if (span <= 0 || static_cast<double>(step) >= span) return floor;
  const double t = static_cast<double>(step) / span;
  return learning_rate + t * (floor - learning_rate);
}

Eigen::VectorXd sgd_loop(const SgdProblem& problem, const SgdConfig& config,
                         Eigen::VectorXd init, Rng& batch_rng,
                         std::vector<SgdTraceRow>* trace,
                         const Eigen::VectorXd* reference) {
  config.validate();
  require(problem.dim > 0 && problem.num_data > 0, "sgd: empty problem");
  require(init.size() == problem.dim, "sgd: init length mismatch");

  const Eigen::Index batch =
      std::min<Eigen::Index>(config.batch_size, problem.num_data);
  const long steps_per_epoch =
      (problem.num_data + batch - 1) / batch;
  const long total_steps = steps_per_epoch * config.epochs;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(problem.num_data));
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd z = std::move(init);
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(problem.dim);

  const double initial_objective = problem.objective(z);
  const double divergence_limit =
      config.divergence_factor * std::max(initial_objective, 1e-12);

  auto record = [&](long step) {
    if (trace == nullptr) return;
    SgdTraceRow row;
    row.step = step;
    row.objective = problem.objective(z);
    if (reference != nullptr && reference->squaredNorm() > 0)
      row.sample_error =
          (z - *reference).squaredNorm() / reference->squaredNorm();
    trace->push_back(row);
  };
  record(0);

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    batch_rng.shuffle(order);
    for (long b = 0; b < steps_per_epoch; ++b, ++step) {
      const Eigen::Index begin = static_cast<Eigen::Index>(b) * batch;
      const Eigen::Index len =
          std::min<Eigen::Index>(batch, problem.num_data - begin);
      std::span<const Eigen::Index> indices(order.data() + begin,
                                            static_cast<std::size_t>(len));
      Eigen::VectorXd grad = problem.gradient(z, indices);
      if (!grad.allFinite())
        throw DivergenceError("sgd: non-finite gradient encountered");
      if (config.clip_norm > 0) {
        const double norm = grad.norm();
        if (norm > config.clip_norm) grad *= config.clip_norm / norm;
      }
      const double lr = config.learning_rate_at(step, total_steps);
      velocity = config.momentum * velocity + grad;
      z -= lr * (grad + config.momentum * velocity);
    }
    const double objective = problem.objective(z);
    if (!std::isfinite(objective) || objective > divergence_limit)
      throw DivergenceError(
          "sgd: objective exceeded the divergence threshold; "
          "try a smaller learning rate");
    record(step);
  }
  return z;
}

}  // namespace linsamp
