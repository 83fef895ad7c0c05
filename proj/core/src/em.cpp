#include "linsamp/em.hpp"

#include <algorithm>
#include <cmath>

#include "linsamp/errors.hpp"
#include "linsamp/parallel.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {

double estimate_gamma(std::span<const Eigen::VectorXd> samples,
                      const DesignOperator& op, const NoisePrecision& noise) {
  require(!samples.empty(), "estimate_gamma: no samples");
  double total = 0.0;
  for (const auto& zeta : samples) {
    require(zeta.size() == op.param_dim(),
            "estimate_gamma: sample length != d'");
    total += noise.quad_form(op.apply(zeta));
  }
  return total / static_cast<double>(samples.size());
}

Eigen::VectorXd estimate_gamma_layerwise(
    std::span<const Eigen::VectorXd> samples, const DesignOperator& op,
    const NoisePrecision& noise, const std::vector<int>& layer_map) {
  require(!samples.empty(), "estimate_gamma: no samples");
  validate_layer_map(layer_map, op.param_dim());
  const int num_layers =
      *std::max_element(layer_map.begin(), layer_map.end()) + 1;
  Eigen::VectorXd gammas = Eigen::VectorXd::Zero(num_layers);
  for (const auto& zeta : samples) {
    const Eigen::VectorXd m_zeta =
        op.apply_transpose(noise.apply(op.apply(zeta)));
    for (Eigen::Index i = 0; i < zeta.size(); ++i)
      gammas[layer_map[static_cast<std::size_t>(i)]] += zeta[i] * m_zeta[i];
  }
  return gammas / static_cast<double>(samples.size());
}

double mstep_update(double gamma_hat, const Eigen::VectorXd& theta_bar) {
  require(gamma_hat >= 0 && std::isfinite(gamma_hat),
          "m-step: gamma_hat must be finite and nonnegative");
  const double theta_sq = theta_bar.squaredNorm();
  if (theta_sq == 0.0)
    throw DegenerateDataError(
        "m-step: |theta_bar| = 0 makes alpha = gamma/|theta_bar|^2 undefined");
  if (gamma_hat == 0.0)
    throw DegenerateDataError("m-step: gamma_hat = 0 would zero the prior");
  return gamma_hat / theta_sq;
}

void rescale_regularizers(std::vector<SampleJob>& jobs,
                          const PriorPrecision& old_prior,
                          const PriorPrecision& new_prior) {
  require(old_prior.dim() == new_prior.dim(),
          "rescale: prior dimensions disagree");
  require(old_prior.variant() == new_prior.variant(),
          "rescale: prior variants disagree");
  const Eigen::ArrayXd ratio =
      old_prior.diag().array() / new_prior.diag().array();
  const Eigen::ArrayXd sqrt_ratio = ratio.sqrt();
  for (auto& job : jobs) {
    require(job.theta0.size() == old_prior.dim(),
            "rescale: job dimension mismatch");
    job.theta0.array() *= sqrt_ratio;
    job.theta_prime.array() *= ratio;
  }
}

void rescale_regularizers(std::vector<SampleJob>& jobs, double alpha_old,
                          double alpha_new) {
  require(alpha_old > 0 && alpha_new > 0, "rescale: alphas must be positive");
  if (jobs.empty()) return;
  const Eigen::Index dim = jobs.front().theta0.size();
  rescale_regularizers(jobs, PriorPrecision::isotropic(dim, alpha_old),
                       PriorPrecision::isotropic(dim, alpha_new));
}

Eigen::VectorXd posterior_mode(const DesignOperator& op,
                               const NoisePrecision& noise,
                               const PriorPrecision& prior,
                               const Eigen::VectorXd& y,
                               const SgdConfig& config,
                               const Eigen::VectorXd* warm_start) {
  require(y.size() == op.stacked_dim(), "posterior mode: target length != n*m");
  const Eigen::Index m = op.output_dim();
  SgdProblem problem;
  problem.dim = op.param_dim();
  problem.num_data = op.num_data();
  problem.gradient = [&](const Eigen::VectorXd& theta,
                         std::span<const Eigen::Index> batch) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(op.param_dim());
    Eigen::VectorXd block_out(m);
    Eigen::VectorXd pulled(op.param_dim());
    for (Eigen::Index i : batch) {
      op.apply_block(i, theta, block_out);
      block_out -= y.segment(i * m, m);
      op.apply_block_transpose(i, noise.block(i) * block_out, pulled);
      grad += pulled;
    }
    grad *= static_cast<double>(op.num_data()) /
            static_cast<double>(batch.size());
    grad += prior.apply(theta);
    return grad;
  };
  problem.objective = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd residual = op.apply(theta) - y;
    return 0.5 * noise.quad_form(residual) + 0.5 * prior.norm_sq(theta);
  };
  Eigen::VectorXd init = warm_start != nullptr
                             ? *warm_start
                             : Eigen::VectorXd::Zero(op.param_dim());
  Rng batch_rng = Rng::stream(config.seed, "batch-mode");
  return sgd_loop(problem, config, std::move(init), batch_rng);
}

double estimate_gram_lmax(const DesignOperator& op,
                          const NoisePrecision& noise, int iterations,
                          std::uint64_t seed) {
  require(iterations >= 1, "lmax: need at least one iteration");
  Rng rng = Rng::stream(seed, "power-iteration");
  Eigen::VectorXd v = rng.gaussian_vector(op.param_dim());
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd w = op.apply_transpose(noise.apply(op.apply(v)));
    lambda = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
  }
  return lambda;
}

namespace {

std::vector<Eigen::VectorXd> collect_iterates(
    const std::vector<SampleJob>& jobs) {
  std::vector<Eigen::VectorXd> zs;
  zs.reserve(jobs.size());
  for (const auto& job : jobs) zs.push_back(job.z);
  return zs;
}

void optimize_jobs(std::vector<SampleJob>& jobs, const DesignOperator& op,
                   const NoisePrecision& noise, const PriorPrecision& prior,
                   const SgdConfig& config, LossVariant variant) {
  parallel_for(static_cast<std::ptrdiff_t>(jobs.size()),
               [&](std::ptrdiff_t j) {
                 sgd_minimize(jobs[static_cast<std::size_t>(j)], op, noise,
                              prior, config, variant);
               });
}

PriorPrecision updated_prior(const PriorPrecision& prior, double gamma_hat,
                             const Eigen::VectorXd& gamma_layers,
                             const Eigen::VectorXd& theta_bar) {
  if (prior.variant() != PriorVariant::kLayerwise)
    return prior.with_alpha(mstep_update(gamma_hat, theta_bar));
  const auto& layer_map = prior.layer_map();
  Eigen::VectorXd new_alphas(gamma_layers.size());
  for (Eigen::Index l = 0; l < gamma_layers.size(); ++l) {
    double layer_sq = 0.0;
    for (Eigen::Index i = 0; i < theta_bar.size(); ++i)
      if (layer_map[static_cast<std::size_t>(i)] == l)
        layer_sq += theta_bar[i] * theta_bar[i];
    if (layer_sq == 0.0)
      throw DegenerateDataError("m-step: zero layer norm");
    if (gamma_layers[l] <= 0.0)
      throw DegenerateDataError("m-step: nonpositive layer gamma");
    new_alphas[l] = gamma_layers[l] / layer_sq;
  }
  return prior.with_alphas(new_alphas);
}

}  // namespace

EmState run_em(std::shared_ptr<const DesignOperator> op,
               const NoisePrecision& noise, const PriorPrecision& prior0,
               const Eigen::VectorXd& y, const EmOptions& options) {
  require(op != nullptr, "run_em: null design");
  require(options.k >= 1, "run_em: k must be >= 1");
  require(options.max_steps >= 0, "run_em: max_steps must be >= 0");
  require(options.tol > 0, "run_em: tol must be positive");

  EmState state{prior0, Eigen::VectorXd(), {}, {}, {}, false, 0, op, {}};

  // Alg. 1 computes the scaling once, before the loop.
  if (options.gprior == GPriorMode::kExact) {
    state.gprior_scale = gprior_exact(*op, noise);
    state.effective_op = apply_gprior(op, *state.gprior_scale);
  } else if (options.gprior == GPriorMode::kSampled) {
    auto raw_jobs = make_sample_jobs(*op, noise, prior0, options.k,
                                     Rng::derive_key(options.seed, "gprior"));
    std::vector<Eigen::VectorXd> theta_primes;
    theta_primes.reserve(raw_jobs.size());
    for (auto& job : raw_jobs) theta_primes.push_back(job.theta_prime);
    state.gprior_scale = gprior_sampled(theta_primes, prior0.alpha());
    state.effective_op = apply_gprior(op, *state.gprior_scale);
  }
  const DesignOperator& design = *state.effective_op;

  state.jobs =
      make_sample_jobs(design, noise, state.prior, options.k, options.seed);

  double gram_lmax = 0.0;
  if (options.auto_learning_rate)
    gram_lmax = estimate_gram_lmax(design, noise, 40,
                                   Rng::derive_key(options.seed, "lmax"));
  auto tuned = [&](const SgdConfig& base, const PriorPrecision& prior) {
    SgdConfig config = base;
    if (options.auto_learning_rate)
      config.learning_rate =
          options.lr_stability / (gram_lmax + prior.diag().maxCoeff());
    return config;
  };

  PriorPrecision prior = state.prior;
  for (int step = 1; step <= options.max_steps; ++step) {
    state.steps = step;
    if (options.redraw_each_step && step > 1)
      state.jobs = make_sample_jobs(
          design, noise, prior, options.k,
          Rng::derive_key(options.seed, "redraw",
                          static_cast<std::uint64_t>(step)));

    SgdConfig mode_config = tuned(options.mode_sgd, prior);
    mode_config.seed = Rng::derive_key(options.seed, "mode-step",
                                       static_cast<std::uint64_t>(step));
    const Eigen::VectorXd* warm =
        state.theta_bar.size() ? &state.theta_bar : nullptr;
    state.theta_bar =
        options.mode_optimizer
            ? options.mode_optimizer(prior, mode_config, warm)
            : posterior_mode(design, noise, prior, y, mode_config, warm);

    optimize_jobs(state.jobs, design, noise, prior,
                  tuned(options.sample_sgd, prior), options.variant);

    const auto iterates = collect_iterates(state.jobs);
    Eigen::VectorXd gamma_layers;
    double gamma_hat = 0.0;
    if (prior.variant() == PriorVariant::kLayerwise) {
      gamma_layers = estimate_gamma_layerwise(iterates, design, noise,
                                              prior.layer_map());
      gamma_hat = gamma_layers.sum();
    } else {
      gamma_hat = estimate_gamma(iterates, design, noise);
    }

    const Eigen::VectorXd old_alphas = prior.alpha_vector();
    PriorPrecision next =
        updated_prior(prior, gamma_hat, gamma_layers, state.theta_bar);
    rescale_regularizers(state.jobs, prior, next);
    prior = next;

    state.trace.push_back(EmStepRow{step, prior.alpha_vector(), gamma_hat,
                                    state.theta_bar.squaredNorm()});

    const double rel_change =
        ((prior.alpha_vector() - old_alphas).cwiseAbs().array() /
         old_alphas.cwiseAbs().array())
            .maxCoeff();
    if (rel_change < options.tol) {
      state.converged = true;
      break;
    }
  }
  state.prior = prior;

  // Fresh prediction samples at the optimised alpha.
  const int k_pred =
      options.prediction_samples < 0 ? options.k : options.prediction_samples;
  if (k_pred > 0) {
    auto pred_jobs =
        make_sample_jobs(design, noise, prior, k_pred,
                         Rng::derive_key(options.seed, "prediction"));
    optimize_jobs(pred_jobs, design, noise, prior,
                  tuned(options.sample_sgd, prior), options.variant);
    state.prediction_samples = collect_iterates(pred_jobs);
  }

  if (state.theta_bar.size() == 0) {
    SgdConfig mode_config = tuned(options.mode_sgd, prior);
    mode_config.seed = Rng::derive_key(options.seed, "mode-step", 0);
    state.theta_bar =
        options.mode_optimizer
            ? options.mode_optimizer(prior, mode_config, nullptr)
            : posterior_mode(design, noise, prior, y, mode_config);
  }
  return state;
}

}  // namespace linsamp
