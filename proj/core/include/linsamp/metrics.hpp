#pragma once

#include <Eigen/Core>

namespace linsamp {

// Symmetrised KL between categorical vectors, with epsilon-smoothing
// p <- p (1 - m eps) + eps to keep logs finite. Inputs must be normalised.
double sym_kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
              double epsilon = 1e-12);

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Moment fit of row-wise samples (k x m).
GaussianFit fit_gaussian(const Eigen::MatrixXd& samples);

// Bures-Wasserstein W2 distance between Gaussian fits.
double wasserstein2(const GaussianFit& a, const GaussianFit& b);

struct EvalMetrics {
  double sym_kl = 0.0;
  double w2 = 0.0;
};

// Convenience pairing: categorical sym-KL plus logit-space W2.
EvalMetrics eval_metrics(const Eigen::VectorXd& categorical_a,
                         const Eigen::VectorXd& categorical_b,
                         const GaussianFit& logits_a,
                         const GaussianFit& logits_b);

}  // namespace linsamp
