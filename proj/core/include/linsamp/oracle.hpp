#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <vector>

#include "linsamp/design.hpp"
#include "linsamp/noise.hpp"
#include "linsamp/prior.hpp"

namespace linsamp {

class Rng;

// Exact dense posterior N(theta_bar, H^{-1}) with H = M + A. Verification
// scale only (d' capped by the dense guard).
struct ExactPosterior {
  Eigen::VectorXd theta_bar;
  Eigen::MatrixXd precision;        // H
  Eigen::LLT<Eigen::MatrixXd> llt;  // factor of H
};

// M = Phi^T B Phi via n block passes.
Eigen::MatrixXd dense_gram(const DesignOperator& op,
                           const NoisePrecision& noise);

ExactPosterior exact_posterior(const DesignOperator& op,
                               const NoisePrecision& noise,
                               const PriorPrecision& prior,
                               const Eigen::Ref<const Eigen::VectorXd>& y);

// zeta* ~ N(0, H^{-1})
Eigen::VectorXd exact_sample(const ExactPosterior& posterior, Rng& rng);

// gamma = Tr{H^{-1} M}; cross-checked against d' - Tr{A H^{-1}}.
double exact_effective_dim(const ExactPosterior& posterior,
                           const Eigen::MatrixXd& gram);

// Per-layer split gamma_l = sum of the layer-l diagonal of H^{-1}M.
Eigen::VectorXd exact_effective_dim_layerwise(const ExactPosterior& posterior,
                                              const Eigen::MatrixXd& gram,
                                              const std::vector<int>& layer_map);

// -1/2 |theta_bar|^2_A' - 1/2 log det(I + A'^{-1} M)
double evidence_bound(const PriorPrecision& a_prime,
                      const Eigen::Ref<const Eigen::VectorXd>& theta_bar,
                      const Eigen::MatrixXd& gram);

// Tight per-step evidence value used along EM traces: the bound above plus
// the data-fit term -1/2 |Y - Phi theta_bar|^2_B. Equals the log evidence of
// the conjugate model up to an additive constant independent of A.
double em_trace_evidence(const DesignOperator& op, const NoisePrecision& noise,
                         const PriorPrecision& prior,
                         const Eigen::Ref<const Eigen::VectorXd>& y,
                         const Eigen::Ref<const Eigen::VectorXd>& theta_bar,
                         const Eigen::MatrixXd& gram);

struct ExactEmRow {
  int step = 0;
  Eigen::VectorXd alpha;  // one entry per layer (single entry when scalar)
  double gamma = 0.0;
  double theta_bar_sq_norm = 0.0;
  double evidence = 0.0;
};

struct ExactEmResult {
  PriorPrecision prior;  // converged A
  Eigen::VectorXd theta_bar;
  std::vector<ExactEmRow> trace;
  bool converged = false;

  double alpha() const { return prior.alpha(); }
};

struct ExactEmOptions {
  int max_steps = 50;
  double tol = 1e-4;  // relative alpha change
};

// MacKay iteration alpha <- gamma / |theta_bar|^2 run to convergence with
// exact E-steps. Raises DegenerateDataError when |theta_bar| = 0 and
// NumericalError if a step decreases the trace evidence beyond 1e-9.
ExactEmResult exact_em(const DesignOperator& op, const NoisePrecision& noise,
                       const Eigen::Ref<const Eigen::VectorXd>& y,
                       double alpha0, const ExactEmOptions& options = {});

// Per-layer update alpha_l <- gamma_l / |theta_bar_l|^2.
ExactEmResult exact_em_layerwise(const DesignOperator& op,
                                 const NoisePrecision& noise,
                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const std::vector<int>& layer_map,
                                 double alpha0,
                                 const ExactEmOptions& options = {});

}  // namespace linsamp
