#include "linsamp/sampler.hpp"

#include <cmath>

#include "linsamp/errors.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {
namespace {

void check_model_shapes(const DesignOperator& op,
                        const NoisePrecision& noise_precision,
                        const PriorPrecision& prior) {
  require(noise_precision.num_data() == op.num_data() &&
              noise_precision.output_dim() == op.output_dim(),
          "sampler: design and noise shapes disagree");
  require(prior.dim() == op.param_dim(),
          "sampler: design and prior dimensions disagree");
}

}  // namespace

std::vector<SampleJob> make_sample_jobs(const DesignOperator& op,
                                        const NoisePrecision& noise,
                                        const PriorPrecision& prior,
                                        int count, std::uint64_t root_seed) {
  check_model_shapes(op, noise, prior);
  require(count >= 1, "sampler: need at least one job");
  std::vector<SampleJob> jobs;
  jobs.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    SampleJob job;
    job.index = j;
    Rng prior_rng = Rng::stream(root_seed, "prior", static_cast<std::uint64_t>(j));
    Rng noise_rng = Rng::stream(root_seed, "noise", static_cast<std::uint64_t>(j));
    job.theta0 = prior.sample(prior_rng);
    if (noise.strictly_pd()) {
      job.noise = noise.sample_noise(noise_rng);
      job.theta_prime = prior.solve(op.apply_transpose(noise.apply(*job.noise)));
    } else {
      // Draw B*E ~ N(0, B) directly through the PSD factor.
      job.theta_prime =
          prior.solve(op.apply_transpose(noise.sample_cov(noise_rng)));
    }
    job.z = job.theta0;
    job.rng_key = Rng::derive_key(root_seed, "batch",
                                  static_cast<std::uint64_t>(j));
    jobs.push_back(std::move(job));
  }
  return jobs;
}

LossEval loss_l(const Eigen::VectorXd& z, const DesignOperator& op,
                const NoisePrecision& noise_precision,
                const PriorPrecision& prior, const Eigen::VectorXd& noise,
                const Eigen::VectorXd& theta0) {
  check_model_shapes(op, noise_precision, prior);
  require(noise.size() == op.stacked_dim(), "loss L: noise length != n*m");
  const Eigen::VectorXd residual = op.apply(z) - noise;
  const Eigen::VectorXd deviation = z - theta0;
  LossEval eval;
  eval.value = 0.5 * noise_precision.quad_form(residual) +
               0.5 * prior.norm_sq(deviation);
  eval.gradient = op.apply_transpose(noise_precision.apply(residual)) +
                  prior.apply(deviation);
  return eval;
}

LossEval loss_l_prime(const Eigen::VectorXd& z, const DesignOperator& op,
                      const NoisePrecision& noise_precision,
                      const PriorPrecision& prior,
                      const Eigen::VectorXd& theta_n) {
  check_model_shapes(op, noise_precision, prior);
  const Eigen::VectorXd fitted = op.apply(z);
  const Eigen::VectorXd deviation = z - theta_n;
  LossEval eval;
  eval.value = 0.5 * noise_precision.quad_form(fitted) +
               0.5 * prior.norm_sq(deviation);
  eval.gradient = op.apply_transpose(noise_precision.apply(fitted)) +
                  prior.apply(deviation);
  return eval;
}

Eigen::VectorXd minibatch_grad(const Eigen::VectorXd& z,
                               const DesignOperator& op,
                               const NoisePrecision& noise_precision,
                               const PriorPrecision& prior,
                               const SampleJob& job,
                               std::span<const Eigen::Index> batch,
                               LossVariant variant) {
  require(!batch.empty(), "minibatch: empty batch");
  if (variant == LossVariant::kL)
    require(job.noise.has_value(),
            "minibatch: loss L needs the explicit noise vector");

  const Eigen::Index m = op.output_dim();
  const double scale = static_cast<double>(op.num_data()) /
                       static_cast<double>(batch.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(op.param_dim());
  Eigen::VectorXd block_out(m);
  Eigen::VectorXd pulled(op.param_dim());
  for (Eigen::Index i : batch) {
    require(i >= 0 && i < op.num_data(), "minibatch: index out of range");
    op.apply_block(i, z, block_out);
    if (variant == LossVariant::kL)
      block_out -= job.noise->segment(i * m, m);
    op.apply_block_transpose(
        i, noise_precision.block(i) * block_out, pulled);
    grad += pulled;
  }
  grad *= scale;
  if (variant == LossVariant::kL)
    grad += prior.apply(z - job.theta0);
  else
    grad += prior.apply(z - job.theta_n());
  return grad;
}

Eigen::VectorXd sgd_minimize(SampleJob& job, const DesignOperator& op,
                             const NoisePrecision& noise_precision,
                             const PriorPrecision& prior,
                             const SgdConfig& config, LossVariant variant,
                             std::vector<SgdTraceRow>* trace,
                             const Eigen::VectorXd* oracle_sample) {
  check_model_shapes(op, noise_precision, prior);
  const Eigen::VectorXd theta_n = job.theta_n();
  SgdProblem problem;
  problem.dim = op.param_dim();
  problem.num_data = op.num_data();
  problem.gradient = [&](const Eigen::VectorXd& z,
                         std::span<const Eigen::Index> batch) {
    return minibatch_grad(z, op, noise_precision, prior, job, batch, variant);
  };
  problem.objective = [&](const Eigen::VectorXd& z) {
    if (variant == LossVariant::kL)
      return loss_l(z, op, noise_precision, prior, *job.noise, job.theta0)
          .value;
    return loss_l_prime(z, op, noise_precision, prior, theta_n).value;
  };
  Rng batch_rng(job.rng_key);
  job.z = sgd_loop(problem, config, job.z, batch_rng, trace, oracle_sample);
  return job.z;
}

VarianceGapEstimate grad_variance_gap(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd& theta0,
                                        const Eigen::VectorXd& noise)>&
        iterate_at,
    const DesignOperator& op, const NoisePrecision& noise_precision,
    const PriorPrecision& prior, int mc_draws, Rng& rng) {
  check_model_shapes(op, noise_precision, prior);
  require(mc_draws >= 2, "variance gap: need at least two draws");

  // Per draw u = |X|^2 - 2 <M z, X> with X = Phi^T B E; E[u] = Tr Delta
  // since X has mean zero.
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < mc_draws; ++i) {
    const Eigen::VectorXd theta0 = prior.sample(rng);
    const Eigen::VectorXd noise = noise_precision.sample_noise(rng);
    const Eigen::VectorXd z = iterate_at(theta0, noise);
    const Eigen::VectorXd x =
        op.apply_transpose(noise_precision.apply(noise));
    const Eigen::VectorXd mz =
        op.apply_transpose(noise_precision.apply(op.apply(z)));
    const double u = x.squaredNorm() - 2.0 * mz.dot(x);
    sum += u;
    sum_sq += u * u;
  }
  const double n = static_cast<double>(mc_draws);
  VarianceGapEstimate out;
  out.estimate = sum / n;
  const double variance =
      std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
  out.std_error = std::sqrt(variance / n);
  out.draws = mc_draws;
  return out;
}

bool prefers_l_prime_at_convergence(double alpha, double gamma, double tr_m) {
  require(alpha > 0 && gamma > 0 && tr_m > 0,
          "preference condition: inputs must be positive");
  return 2.0 * alpha * gamma > tr_m;
}

}  // namespace linsamp
