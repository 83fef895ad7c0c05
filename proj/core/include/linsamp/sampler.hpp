#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "linsamp/design.hpp"
#include "linsamp/noise.hpp"
#include "linsamp/prior.hpp"
#include "linsamp/sgd.hpp"

namespace linsamp {

enum class LossVariant { kL, kLPrime };

// One sample-then-optimize unit: the frozen regularizer draws, the current
// iterate, and a private rng stream for batching.
struct SampleJob {
  int index = 0;
  Eigen::VectorXd theta0;       // prior draw
  Eigen::VectorXd theta_prime;  // A^{-1} Phi^T B E (compressed noise)
  std::optional<Eigen::VectorXd> noise;  // E itself; absent for PSD-only B
  Eigen::VectorXd z;            // iterate, initialised at theta0
  std::uint64_t rng_key = 0;

  Eigen::VectorXd theta_n() const { return theta0 + theta_prime; }
};

// Draws k jobs using independent "prior"/"noise" streams per sample index.
// When B is merely PSD the noise is drawn in its compressed form only.
std::vector<SampleJob> make_sample_jobs(const DesignOperator& op,
                                        const NoisePrecision& noise,
                                        const PriorPrecision& prior,
                                        int count, std::uint64_t root_seed);

struct LossEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

// L(z)  = 1/2 |Phi z - E|^2_B + 1/2 |z - theta0|^2_A
LossEval loss_l(const Eigen::VectorXd& z, const DesignOperator& op,
                const NoisePrecision& noise_precision,
                const PriorPrecision& prior, const Eigen::VectorXd& noise,
                const Eigen::VectorXd& theta0);

// L'(z) = 1/2 |Phi z|^2_B + 1/2 |z - theta_n|^2_A
LossEval loss_l_prime(const Eigen::VectorXd& z, const DesignOperator& op,
                      const NoisePrecision& noise_precision,
                      const PriorPrecision& prior,
                      const Eigen::VectorXd& theta_n);

// Unbiased minibatch gradient: scaled data term over the batch plus the
// exactly computed regularizer term.
Eigen::VectorXd minibatch_grad(const Eigen::VectorXd& z,
                               const DesignOperator& op,
                               const NoisePrecision& noise_precision,
                               const PriorPrecision& prior,
                               const SampleJob& job,
                               std::span<const Eigen::Index> batch,
                               LossVariant variant);

// Minimizes the chosen loss for one job; the job's iterate is updated in
// place (warm starts across EM steps) and also returned.
Eigen::VectorXd sgd_minimize(SampleJob& job, const DesignOperator& op,
                             const NoisePrecision& noise_precision,
                             const PriorPrecision& prior,
                             const SgdConfig& config, LossVariant variant,
                             std::vector<SgdTraceRow>* trace = nullptr,
                             const Eigen::VectorXd* oracle_sample = nullptr);

struct VarianceGapEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  int draws = 0;
};

// Monte Carlo estimate of Tr Delta = Tr Var(g) - Tr Var(g') for the
// data-term gradient estimators, normalised per draw. `iterate_at` maps a
// fresh draw (theta0, E) to the evaluation point z.
VarianceGapEstimate grad_variance_gap(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd& theta0,
                                        const Eigen::VectorXd& noise)>&
        iterate_at,
    const DesignOperator& op, const NoisePrecision& noise_precision,
    const PriorPrecision& prior, int mc_draws, Rng& rng);

// 2 alpha gamma > Tr M
bool prefers_l_prime_at_convergence(double alpha, double gamma, double tr_m);

}  // namespace linsamp
