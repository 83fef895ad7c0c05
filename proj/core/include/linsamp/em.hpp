#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "linsamp/design.hpp"
#include "linsamp/gprior.hpp"
#include "linsamp/noise.hpp"
#include "linsamp/prior.hpp"
#include "linsamp/sampler.hpp"
#include "linsamp/sgd.hpp"

namespace linsamp {

// Hutchinson estimate gamma_hat = 1/k sum_j |Phi zeta_j|^2_B, accumulated
// in n block passes.
double estimate_gamma(std::span<const Eigen::VectorXd> samples,
                      const DesignOperator& op, const NoisePrecision& noise);

// Per-layer split gamma_hat_l = 1/k sum_j <zeta_j|_l, (M zeta_j)|_l>;
// telescopes exactly to estimate_gamma.
Eigen::VectorXd estimate_gamma_layerwise(
    std::span<const Eigen::VectorXd> samples, const DesignOperator& op,
    const NoisePrecision& noise, const std::vector<int>& layer_map);

// alpha' = gamma_hat / |theta_bar|^2
double mstep_update(double gamma_hat, const Eigen::VectorXd& theta_bar);

// Closed-form regularizer rescaling after an alpha change:
// theta0 <- sqrt(a_old/a_new) theta0 (per coordinate), theta' <- (a_old/a_new) theta'.
void rescale_regularizers(std::vector<SampleJob>& jobs,
                          const PriorPrecision& old_prior,
                          const PriorPrecision& new_prior);
void rescale_regularizers(std::vector<SampleJob>& jobs, double alpha_old,
                          double alpha_new);

// Minimizes 1/2 |Phi theta - y|^2_B + 1/2 |theta|^2_A by SGD.
Eigen::VectorXd posterior_mode(const DesignOperator& op,
                               const NoisePrecision& noise,
                               const PriorPrecision& prior,
                               const Eigen::VectorXd& y,
                               const SgdConfig& config,
                               const Eigen::VectorXd* warm_start = nullptr);

// Power-iteration estimate of the top eigenvalue of M = Phi^T B Phi.
double estimate_gram_lmax(const DesignOperator& op,
                          const NoisePrecision& noise, int iterations = 40,
                          std::uint64_t seed = 0);

enum class GPriorMode { kOff, kExact, kSampled };

struct EmOptions {
  int k = 16;
  int max_steps = 8;
  double tol = 1e-3;               // relative alpha change, max over layers
  bool redraw_each_step = false;   // regularizers are drawn once by default
  int prediction_samples = -1;     // fresh samples at the final alpha; -1 = k
  LossVariant variant = LossVariant::kLPrime;
  GPriorMode gprior = GPriorMode::kOff;
  SgdConfig mode_sgd;
  SgdConfig sample_sgd;
  std::uint64_t seed = 0;
  // Per-step learning rate lr = lr_stability / (lmax(M) + max diag A),
  // replacing the configured rate; keeps SGD stable while alpha moves.
  bool auto_learning_rate = false;
  double lr_stability = 0.9;
  // Replaces the quadratic posterior_mode step, e.g. with a cross-entropy
  // surrogate loss for classification.
  std::function<Eigen::VectorXd(const PriorPrecision& prior,
                                const SgdConfig& config,
                                const Eigen::VectorXd* warm_start)>
      mode_optimizer;
};

struct EmStepRow {
  int step = 0;
  Eigen::VectorXd alpha;  // post-update, one entry per layer
  double gamma_hat = 0.0;
  double theta_bar_sq_norm = 0.0;
};

struct EmState {
  PriorPrecision prior;  // optimised A
  Eigen::VectorXd theta_bar;
  std::vector<SampleJob> jobs;
  std::vector<Eigen::VectorXd> prediction_samples;
  std::vector<EmStepRow> trace;
  bool converged = false;
  int steps = 0;
  // Operator the EM actually ran against (g-prior-scaled when enabled).
  std::shared_ptr<const DesignOperator> effective_op;
  std::optional<GPriorScale> gprior_scale;
};

// Stochastic EM: sample-then-optimize E-steps, Hutchinson M-steps, cached
// regularizers rescaled across steps, fresh prediction samples at the end.
EmState run_em(std::shared_ptr<const DesignOperator> op,
               const NoisePrecision& noise, const PriorPrecision& prior0,
               const Eigen::VectorXd& y, const EmOptions& options);

}  // namespace linsamp
