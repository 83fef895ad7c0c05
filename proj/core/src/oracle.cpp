#include "linsamp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "linsamp/errors.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {
namespace {

void check_shapes(const DesignOperator& op, const NoisePrecision& noise,
                  const PriorPrecision& prior) {
  require(noise.num_data() == op.num_data() &&
              noise.output_dim() == op.output_dim(),
          "oracle: design and noise shapes disagree");
  require(prior.dim() == op.param_dim(),
          "oracle: design and prior dimensions disagree");
  require(op.param_dim() <= DesignOperator::kDenseGuard,
          "oracle: dense path guarded to d' <= 4096");
}

Eigen::VectorXd design_rhs(const DesignOperator& op,
                           const NoisePrecision& noise,
                           const Eigen::Ref<const Eigen::VectorXd>& y) {
  return op.apply_transpose(noise.apply(y));  // Phi^T B y
}

// One MacKay step shared by the scalar and layerwise drivers.
struct EmStepState {
  ExactPosterior posterior;
  Eigen::VectorXd gamma_layers;
  double gamma = 0.0;
};

EmStepState em_e_step(const DesignOperator& op, const NoisePrecision& noise,
                      const PriorPrecision& prior,
                      const Eigen::Ref<const Eigen::VectorXd>& y,
                      const Eigen::MatrixXd& gram,
                      const std::vector<int>* layer_map) {
  EmStepState s;
  s.posterior = exact_posterior(op, noise, prior, y);
  if (layer_map != nullptr) {
    s.gamma_layers =
        exact_effective_dim_layerwise(s.posterior, gram, *layer_map);
    s.gamma = s.gamma_layers.sum();
  } else {
    s.gamma = exact_effective_dim(s.posterior, gram);
    s.gamma_layers = Eigen::VectorXd::Constant(1, s.gamma);
  }
  return s;
}

ExactEmResult run_exact_em(const DesignOperator& op,
                           const NoisePrecision& noise,
                           const Eigen::Ref<const Eigen::VectorXd>& y,
                           PriorPrecision prior,
                           const std::vector<int>* layer_map,
                           const ExactEmOptions& options) {
  require(options.max_steps >= 0, "exact em: max_steps must be >= 0");
  require(options.tol > 0, "exact em: tol must be positive");

  const Eigen::MatrixXd gram = dense_gram(op, noise);
  ExactEmResult result{prior, Eigen::VectorXd(), {}, false};
  double previous_evidence = -std::numeric_limits<double>::infinity();

  for (int step = 1; step <= options.max_steps; ++step) {
    EmStepState s = em_e_step(op, noise, prior, y, gram, layer_map);
    const double theta_sq = s.posterior.theta_bar.squaredNorm();
    if (theta_sq == 0.0)
      throw DegenerateDataError(
          "exact em: |theta_bar| = 0 makes the M-step update undefined");

    // Evidence at the alpha actually used in this E-step; this is the
    // quantity EM drives upward.
    const double evidence =
        em_trace_evidence(op, noise, prior, y, s.posterior.theta_bar, gram);
    if (evidence < previous_evidence - 1e-9)
      throw NumericalError("exact em: evidence decreased along the trace");
    previous_evidence = evidence;
    result.theta_bar = s.posterior.theta_bar;

    const Eigen::VectorXd old_alphas = prior.alpha_vector();
    if (layer_map != nullptr) {
      Eigen::VectorXd new_alphas(s.gamma_layers.size());
      for (Eigen::Index l = 0; l < new_alphas.size(); ++l) {
        double layer_sq = 0.0;
        for (Eigen::Index i = 0; i < prior.dim(); ++i)
          if ((*layer_map)[static_cast<std::size_t>(i)] == l)
            layer_sq += s.posterior.theta_bar[i] * s.posterior.theta_bar[i];
        if (layer_sq == 0.0)
          throw DegenerateDataError("exact em: zero layer norm in M-step");
        new_alphas[l] = s.gamma_layers[l] / layer_sq;
      }
      prior = prior.with_alphas(new_alphas);
    } else {
      prior = prior.with_alpha(s.gamma / theta_sq);
    }

    // Each row reports one completed step: the E-step quantities at the
    // incoming alpha and the alpha the M-step produced.
    result.trace.push_back(ExactEmRow{step, prior.alpha_vector(), s.gamma,
                                      theta_sq, evidence});

    const Eigen::VectorXd new_alphas = prior.alpha_vector();
    const double rel_change =
        ((new_alphas - old_alphas).cwiseAbs().array() /
         old_alphas.cwiseAbs().array())
            .maxCoeff();
    if (rel_change < options.tol) {
      result.converged = true;
      break;
    }
  }

  if (result.theta_bar.size() == 0) {
    // max_steps == 0: report the state at the initial prior
    EmStepState s = em_e_step(op, noise, prior, y, gram, layer_map);
    result.theta_bar = s.posterior.theta_bar;
  }
  result.prior = prior;
  return result;
}

}  // namespace

Eigen::MatrixXd dense_gram(const DesignOperator& op,
                           const NoisePrecision& noise) {
  require(noise.num_data() == op.num_data() &&
              noise.output_dim() == op.output_dim(),
          "oracle: design and noise shapes disagree");
  const Eigen::Index d = op.param_dim();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < op.num_data(); ++i) {
    const Eigen::MatrixXd block = op.dense_block(i);
    gram.noalias() += block.transpose() * noise.block(i) * block;
  }
  return gram;
}

ExactPosterior exact_posterior(const DesignOperator& op,
                               const NoisePrecision& noise,
                               const PriorPrecision& prior,
                               const Eigen::Ref<const Eigen::VectorXd>& y) {
  check_shapes(op, noise, prior);
  require(y.size() == op.stacked_dim(), "oracle: target length != n*m");
  ExactPosterior post;
  post.precision = dense_gram(op, noise);
  post.precision.diagonal() += prior.diag();
  post.llt.compute(post.precision);
  if (post.llt.info() != Eigen::Success)
    throw FactorizationError("oracle: H = M + A is not numerically PD");
  post.theta_bar = post.llt.solve(design_rhs(op, noise, y));
  return post;
}

Eigen::VectorXd exact_sample(const ExactPosterior& posterior, Rng& rng) {
  // L^{-T} z has covariance (L L^T)^{-1} = H^{-1}.
  Eigen::VectorXd z = rng.gaussian_vector(posterior.theta_bar.size());
  return posterior.llt.matrixU().solve(z);
}

double exact_effective_dim(const ExactPosterior& posterior,
                           const Eigen::MatrixXd& gram) {
  const Eigen::Index d = posterior.precision.rows();
  require(gram.rows() == d && gram.cols() == d, "oracle: gram shape mismatch");
  const Eigen::MatrixXd h_inv_m = posterior.llt.solve(gram);
  const double gamma = h_inv_m.trace();
  // Equivalent form: d' - Tr{A H^{-1}}, with A = H - M.
  const Eigen::MatrixXd a_dense = posterior.precision - gram;
  const double alt = static_cast<double>(d) -
                     posterior.llt.solve(a_dense).trace();
  if (std::abs(gamma - alt) > 1e-8 * std::max(1.0, std::abs(gamma)))
    throw NumericalError("oracle: effective-dimension forms disagree");
  return gamma;
}

Eigen::VectorXd exact_effective_dim_layerwise(
    const ExactPosterior& posterior, const Eigen::MatrixXd& gram,
    const std::vector<int>& layer_map) {
  validate_layer_map(layer_map, posterior.precision.rows());
  const Eigen::MatrixXd h_inv_m = posterior.llt.solve(gram);
  const int num_layers =
      *std::max_element(layer_map.begin(), layer_map.end()) + 1;
  Eigen::VectorXd gammas = Eigen::VectorXd::Zero(num_layers);
  for (Eigen::Index i = 0; i < h_inv_m.rows(); ++i)
    gammas[layer_map[static_cast<std::size_t>(i)]] += h_inv_m(i, i);
  return gammas;
}

double evidence_bound(const PriorPrecision& a_prime,
                      const Eigen::Ref<const Eigen::VectorXd>& theta_bar,
                      const Eigen::MatrixXd& gram) {
  require(a_prime.dim() == gram.rows() && gram.rows() == gram.cols(),
          "oracle: evidence bound shape mismatch");
  require(theta_bar.size() == gram.rows(),
          "oracle: theta_bar length mismatch");
  // log det(I + A^{-1} M) computed on the symmetrized similarity
  // I + A^{-1/2} M A^{-1/2}, which is PD for PSD M.
  const Eigen::VectorXd inv_sqrt = a_prime.diag().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd t = inv_sqrt.asDiagonal() * gram * inv_sqrt.asDiagonal();
  t.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(t);
  if (llt.info() != Eigen::Success)
    throw FactorizationError("oracle: I + A^{-1}M not numerically PD");
  const double log_det =
      2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * a_prime.norm_sq(theta_bar) - 0.5 * log_det;
}

double em_trace_evidence(const DesignOperator& op, const NoisePrecision& noise,
                         const PriorPrecision& prior,
                         const Eigen::Ref<const Eigen::VectorXd>& y,
                         const Eigen::Ref<const Eigen::VectorXd>& theta_bar,
                         const Eigen::MatrixXd& gram) {
  const Eigen::VectorXd residual = y - op.apply(theta_bar);
  return evidence_bound(prior, theta_bar, gram) -
         0.5 * noise.quad_form(residual);
}

ExactEmResult exact_em(const DesignOperator& op, const NoisePrecision& noise,
                       const Eigen::Ref<const Eigen::VectorXd>& y,
                       double alpha0, const ExactEmOptions& options) {
  PriorPrecision prior = PriorPrecision::isotropic(op.param_dim(), alpha0);
  return run_exact_em(op, noise, y, prior, nullptr, options);
}

ExactEmResult exact_em_layerwise(const DesignOperator& op,
                                 const NoisePrecision& noise,
                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const std::vector<int>& layer_map,
                                 double alpha0, const ExactEmOptions& options) {
  validate_layer_map(layer_map, op.param_dim());
  const int num_layers =
      *std::max_element(layer_map.begin(), layer_map.end()) + 1;
  PriorPrecision prior = PriorPrecision::layerwise(
      Eigen::VectorXd::Constant(num_layers, alpha0), layer_map);
  return run_exact_em(op, noise, y, prior, &layer_map, options);
}

}  // namespace linsamp
