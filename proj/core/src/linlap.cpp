#include "linsamp/linlap.hpp"

#include <cmath>
#include <numbers>

#include "linsamp/errors.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd shifted = logits.array() - logits.maxCoeff();
  Eigen::ArrayXd e = shifted.exp();
  return (e / e.sum()).matrix();
}

double log_sum_exp(const Eigen::VectorXd& values) {
  const double top = values.maxCoeff();
  return top + std::log((values.array() - top).exp().sum());
}

JacobianDesign::JacobianDesign(
    std::shared_ptr<const DifferentiableModel> model, Eigen::MatrixXd inputs)
    : model_(std::move(model)), inputs_(std::move(inputs)) {
  require(model_ != nullptr, "jacobian design: null model");
  require(inputs_.cols() == model_->input_dim(),
          "jacobian design: input width != model input dim");
}

void JacobianDesign::apply_block(Eigen::Index i,
                                 const Eigen::Ref<const Eigen::VectorXd>& v,
                                 Eigen::Ref<Eigen::VectorXd> out) const {
  check_apply_shape(v);
  out = model_->jvp(inputs_.row(i).transpose(), v);
}

void JacobianDesign::apply_block_transpose(
    Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& u,
    Eigen::Ref<Eigen::VectorXd> out) const {
  require(u.size() == output_dim(), "jacobian design: block length != m");
  out = model_->vjp(inputs_.row(i).transpose(), u);
}

SurrogateModel linearize(std::shared_ptr<const DifferentiableModel> model,
                         const Dataset& data, LikelihoodSpec likelihood) {
  require(model != nullptr, "linearize: null model");
  data.validate();
  require(data.m() == model->output_dim(),
          "linearize: dataset and model output dims disagree");
  require(data.input_dim() == model->input_dim(),
          "linearize: dataset and model input dims disagree");
  require(likelihood.sigma2 > 0, "linearize: sigma2 must be positive");

  // Adjoint probes <jvp(x,v), u> = <v, vjp(x,u)> on a few datapoints.
  Rng probe_rng = Rng::stream(0x6a70726f6265ull, "linearize-probes");
  const Eigen::Index checks = std::min<Eigen::Index>(data.n(), 3);
  for (Eigen::Index i = 0; i < checks; ++i) {
    const Eigen::VectorXd x = data.inputs.row(i).transpose();
    const Eigen::VectorXd v = probe_rng.gaussian_vector(model->param_dim());
    const Eigen::VectorXd u = probe_rng.gaussian_vector(model->output_dim());
    const double forward = model->jvp(x, v).dot(u);
    const double adjoint = v.dot(model->vjp(x, u));
    const double scale = std::max(1.0, v.norm() * u.norm());
    if (std::abs(forward - adjoint) > 1e-10 * scale)
      throw ModelDefinitionError(
          "linearize: jvp/vjp adjoint probe failed; the model's forward and "
          "reverse products are inconsistent");
  }

  SurrogateModel surrogate;
  surrogate.design = std::make_shared<JacobianDesign>(model, data.inputs);
  surrogate.likelihood = likelihood;
  const Eigen::Index n = data.n();
  const Eigen::Index m = model->output_dim();
  surrogate.base_predictions.resize(n, m);
  surrogate.offsets.resize(n * m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = data.inputs.row(i).transpose();
    const Eigen::VectorXd f = model->forward(x);
    const Eigen::VectorXd phi_w = model->jvp(x, model->parameters());
    surrogate.base_predictions.row(i) = f;
    surrogate.offsets.segment(i * m, m) = f - phi_w;
  }
  return surrogate;
}

NoisePrecision curvature_blocks(LikelihoodSpec likelihood,
                                const Eigen::MatrixXd& predictions) {
  require(predictions.rows() > 0 && predictions.cols() > 0,
          "curvature: empty predictions");
  const Eigen::Index m = predictions.cols();
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(static_cast<std::size_t>(predictions.rows()));
  switch (likelihood.kind) {
    case Likelihood::kGaussian: {
      require(likelihood.sigma2 > 0, "curvature: sigma2 must be positive");
      const Eigen::MatrixXd block =
          Eigen::MatrixXd::Identity(m, m) / likelihood.sigma2;
      for (Eigen::Index i = 0; i < predictions.rows(); ++i)
        blocks.push_back(block);
      break;
    }
    case Likelihood::kCategorical: {
      for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
        const Eigen::VectorXd p = softmax(predictions.row(i).transpose());
        blocks.push_back(Eigen::MatrixXd(p.asDiagonal()) - p * p.transpose());
      }
      break;
    }
  }
  return NoisePrecision::from_blocks(std::move(blocks));
}

PredictiveSampleSet predictive_samples(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    std::span<const Eigen::VectorXd> samples, const DifferentiableModel& model,
    const Eigen::VectorXd* scale) {
  PredictiveSampleSet set;
  set.x = x;
  set.base = model.forward(x);
  set.deviations.resize(static_cast<Eigen::Index>(samples.size()),
                        model.output_dim());
  for (std::size_t j = 0; j < samples.size(); ++j) {
    require(samples[j].size() == model.param_dim(),
            "predictive: sample length != d'");
    const Eigen::VectorXd v =
        scale != nullptr ? scale->cwiseProduct(samples[j]) : samples[j];
    set.deviations.row(static_cast<Eigen::Index>(j)) = model.jvp(x, v);
  }
  return set;
}

Eigen::VectorXd probit_predict(const Eigen::VectorXd& logits,
                               const Eigen::MatrixXd& deviations) {
  require(deviations.rows() >= 1, "probit: need at least one sample");
  require(deviations.cols() == logits.size(),
          "probit: deviation width != class count");
  const double k = static_cast<double>(deviations.rows());
  const Eigen::ArrayXd second_moment =
      deviations.array().square().colwise().sum().transpose();
  const Eigen::ArrayXd damp =
      (1.0 + (std::numbers::pi / (2.0 * k)) * second_moment).sqrt();
  return softmax((logits.array() / damp).matrix());
}

std::vector<KadicSet> draw_kadic_sets(Eigen::Index num_items, int kappa,
                                      int tau, int shuffles, Rng& rng) {
  require(kappa >= 1 && tau >= kappa, "kadic: need 1 <= kappa <= tau");
  require(shuffles >= 1, "kadic: need at least one shuffle");
  require(num_items >= kappa, "kadic: fewer items than kappa");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(num_items));
  std::vector<KadicSet> sets;
  for (int s = 0; s < shuffles; ++s) {
    for (Eigen::Index i = 0; i < num_items; ++i)
      order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    const Eigen::Index groups = num_items / kappa;
    for (Eigen::Index g = 0; g < groups; ++g) {
      KadicSet set;
      set.items.assign(order.begin() + g * kappa,
                       order.begin() + (g + 1) * kappa);
      // Uniform composition of tau into kappa positive parts via a random
      // (kappa-1)-subset of cut points.
      std::vector<int> cuts;
      if (kappa > 1) {
        std::vector<int> positions(static_cast<std::size_t>(tau - 1));
        for (int i = 0; i < tau - 1; ++i) positions[static_cast<std::size_t>(i)] = i + 1;
        rng.shuffle(positions);
        cuts.assign(positions.begin(), positions.begin() + (kappa - 1));
        std::sort(cuts.begin(), cuts.end());
      }
      set.multiplicities.resize(static_cast<std::size_t>(kappa));
      int prev = 0;
      for (int i = 0; i < kappa - 1; ++i) {
        set.multiplicities[static_cast<std::size_t>(i)] = cuts[static_cast<std::size_t>(i)] - prev;
        prev = cuts[static_cast<std::size_t>(i)];
      }
      set.multiplicities[static_cast<std::size_t>(kappa - 1)] = tau - prev;
      sets.push_back(std::move(set));
    }
  }
  return sets;
}

double kadic_joint_ll_over_sets(const Eigen::MatrixXd& loglik,
                                std::span<const KadicSet> sets) {
  require(!sets.empty(), "kadic: no sets");
  const double k = static_cast<double>(loglik.cols());
  double total = 0.0;
  for (const auto& set : sets) {
    require(set.items.size() == set.multiplicities.size(),
            "kadic: malformed set");
    Eigen::VectorXd per_sample = Eigen::VectorXd::Zero(loglik.cols());
    for (std::size_t l = 0; l < set.items.size(); ++l) {
      require(set.items[l] >= 0 && set.items[l] < loglik.rows(),
              "kadic: item index out of range");
      per_sample +=
          static_cast<double>(set.multiplicities[l]) * loglik.row(set.items[l]);
    }
    total += log_sum_exp(per_sample) - std::log(k);
  }
  return total / static_cast<double>(sets.size());
}

double kadic_joint_ll(const Eigen::MatrixXd& loglik, int kappa, int tau,
                      int shuffles, Rng& rng) {
  const auto sets = draw_kadic_sets(loglik.rows(), kappa, tau, shuffles, rng);
  return kadic_joint_ll_over_sets(loglik, sets);
}

Eigen::MatrixXd stabilized_covariance(const Eigen::MatrixXd& deviations) {
  require(deviations.rows() >= 1, "stabilized covariance: need k >= 1");
  const double k = static_cast<double>(deviations.rows());
  const Eigen::MatrixXd second =
      deviations.transpose() * deviations / k;  // S
  Eigen::MatrixXd out = 0.5 * second;
  out.diagonal() += 0.5 * second.diagonal();
  return out;
}

Eigen::VectorXd surrogate_posterior_mode(const SurrogateModel& surrogate,
                                         const Dataset& data,
                                         const PriorPrecision& prior,
                                         const SgdConfig& config,
                                         const Eigen::VectorXd* warm_start) {
  const DesignOperator& op = *surrogate.design;
  require(data.n() == op.num_data(), "surrogate mode: dataset size mismatch");
  require(prior.dim() == op.param_dim(), "surrogate mode: prior dim mismatch");
  const Eigen::Index m = op.output_dim();
  const bool categorical =
      surrogate.likelihood.kind == Likelihood::kCategorical;
  const double inv_sigma2 = 1.0 / surrogate.likelihood.sigma2;

  // Residual of the negative log-likelihood in prediction space.
  auto residual = [&](Eigen::Index i, const Eigen::VectorXd& yhat) {
    const Eigen::VectorXd y = data.targets.row(i).transpose();
    if (categorical) return Eigen::VectorXd(softmax(yhat) - y);
    return Eigen::VectorXd(inv_sigma2 * (yhat - y));
  };
  auto item_loss = [&](Eigen::Index i, const Eigen::VectorXd& yhat) {
    const Eigen::VectorXd y = data.targets.row(i).transpose();
    if (categorical) return log_sum_exp(yhat) - y.dot(yhat);
    return 0.5 * inv_sigma2 * (yhat - y).squaredNorm();
  };

  SgdProblem problem;
  problem.dim = op.param_dim();
  problem.num_data = op.num_data();
  problem.gradient = [&](const Eigen::VectorXd& theta,
                         std::span<const Eigen::Index> batch) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(op.param_dim());
    Eigen::VectorXd yhat(m);
    Eigen::VectorXd pulled(op.param_dim());
    for (Eigen::Index i : batch) {
      op.apply_block(i, theta, yhat);
      yhat += surrogate.offsets.segment(i * m, m);
      op.apply_block_transpose(i, residual(i, yhat), pulled);
      grad += pulled;
    }
    grad *= static_cast<double>(op.num_data()) /
            static_cast<double>(batch.size());
    grad += prior.apply(theta);
    return grad;
  };
  problem.objective = [&](const Eigen::VectorXd& theta) {
    double loss = 0.5 * prior.norm_sq(theta);
    Eigen::VectorXd yhat(m);
    for (Eigen::Index i = 0; i < op.num_data(); ++i) {
      op.apply_block(i, theta, yhat);
      yhat += surrogate.offsets.segment(i * m, m);
      loss += item_loss(i, yhat);
    }
    return loss;
  };

  Eigen::VectorXd init = warm_start != nullptr
                             ? *warm_start
                             : Eigen::VectorXd::Zero(op.param_dim());
  Rng batch_rng = Rng::stream(config.seed, "batch-mode");
  return sgd_loop(problem, config, std::move(init), batch_rng);
}

}  // namespace linsamp
