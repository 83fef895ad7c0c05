#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "linsamp/design.hpp"
#include "linsamp/noise.hpp"

namespace linsamp {

// Feature normalisation vector s with s_i = diag(Phi^T B Phi)_ii^{-1/2}.
struct GPriorScale {
  Eigen::VectorXd s;  // strictly positive
};

struct GPriorOptions {
  // Dead features (zero/near-zero Gram diagonal) are floored so that
  // s_i <= floor_multiplier * median(s) over the informative coordinates.
  double floor_multiplier = 1e6;
};

// Exact scaling from the Gram diagonal, computed via d' unit-vector probes
// of the forward map (no dense materialization).
GPriorScale gprior_exact(const DesignOperator& op, const NoisePrecision& noise,
                         const GPriorOptions& options = {});

// Sampled estimate from cached regularizer vectors theta'_j = A^{-1} Phi^T B E_j:
// s = alpha^{-1} (mean_j theta'_j^{.2})^{.-1/2}.
GPriorScale gprior_sampled(const std::vector<Eigen::VectorXd>& theta_primes,
                           double alpha, const GPriorOptions& options = {});

// Same formula applied to a supplied second moment E[theta' .* theta'].
GPriorScale gprior_from_second_moment(const Eigen::VectorXd& second_moment,
                                      double alpha,
                                      const GPriorOptions& options = {});

// phi'(x) = phi(x) diag(s)
std::shared_ptr<const DesignOperator> apply_gprior(
    std::shared_ptr<const DesignOperator> op, const GPriorScale& scale);

}  // namespace linsamp
