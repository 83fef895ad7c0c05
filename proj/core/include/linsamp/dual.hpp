#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "linsamp/design.hpp"
#include "linsamp/em.hpp"
#include "linsamp/noise.hpp"
#include "linsamp/prior.hpp"

namespace linsamp {

class Rng;

// Observation-space kernel v -> Phi A^{-1} Phi^T v + B^{-1} v. Requires a
// strictly PD noise precision (Gaussian-likelihood usage).
class KernelOperator {
 public:
  KernelOperator(std::shared_ptr<const DesignOperator> op,
                 PriorPrecision prior, NoisePrecision noise);

  Eigen::Index dim() const { return op_->stacked_dim(); }
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  // Phi A^{-1} Phi^T v (kernel minus the noise shift).
  Eigen::VectorXd low_rank_apply(
      const Eigen::Ref<const Eigen::VectorXd>& v) const;
  // Scalar floor of the B^{-1} spectrum used as the preconditioner shift.
  double diagonal_shift() const { return shift_; }

  const DesignOperator& design() const { return *op_; }
  const PriorPrecision& prior() const { return prior_; }
  const NoisePrecision& noise() const { return noise_; }

 private:
  std::shared_ptr<const DesignOperator> op_;
  PriorPrecision prior_;
  NoisePrecision noise_;
  double shift_ = 0.0;
};

// P = shift I + Q diag(lambda) Q^T with orthonormal Q, inverted through the
// Woodbury identity.
class LowRankPreconditioner {
 public:
  LowRankPreconditioner(double shift, Eigen::MatrixXd basis,
                        Eigen::VectorXd eigenvalues);

  Eigen::Index rank() const { return eigenvalues_.size(); }
  double shift() const { return shift_; }
  const Eigen::MatrixXd& basis() const { return basis_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd apply_inverse(
      const Eigen::Ref<const Eigen::VectorXd>& v) const;

 private:
  double shift_;
  Eigen::MatrixXd basis_;        // nm x r, orthonormal columns
  Eigen::VectorXd eigenvalues_;  // r, nonnegative
};

// Randomized range finder plus a small projected eigenproblem on the
// low-rank part of K. rank 0 falls back to the diagonal shift alone.
LowRankPreconditioner build_preconditioner(const KernelOperator& kernel,
                                           Eigen::Index rank,
                                           Eigen::Index oversampling,
                                           Rng& rng);

struct PcgConfig {
  double tol = 1e-3;
  int max_iter = 150;
};

struct PcgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double final_residual = 0.0;  // recomputed from scratch post-hoc
  bool converged = false;
};

// Preconditioned conjugate gradients on K x = rhs. The convergence claim is
// certified against a freshly recomputed residual, not the recursion.
PcgResult pcg_solve(const KernelOperator& kernel, const Eigen::VectorXd& rhs,
                    const LowRankPreconditioner* preconditioner,
                    const PcgConfig& config);

struct DualSolveInfo {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
};

// zeta = theta0 + A^{-1} Phi^T c with K c = E - Phi theta0.
Eigen::VectorXd matheron_sample(const Eigen::VectorXd& theta0,
                                const Eigen::VectorXd& noise,
                                const KernelOperator& kernel,
                                const LowRankPreconditioner* preconditioner,
                                const PcgConfig& config,
                                DualSolveInfo* info = nullptr);

// theta_bar = A^{-1} Phi^T c with K c = y + delta.
Eigen::VectorXd dual_posterior_mean(const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& delta,
                                    const KernelOperator& kernel,
                                    const LowRankPreconditioner* preconditioner,
                                    const PcgConfig& config,
                                    DualSolveInfo* info = nullptr);

struct DualEmOptions {
  int k = 2;
  int max_steps = 8;
  double tol = 1e-3;
  PcgConfig pcg;
  Eigen::Index precond_rank = -1;  // -1: min(400, nm/4)
  Eigen::Index oversampling = 10;
  bool redraw_each_step = true;    // Alg. 3 redraws (theta0, E) per E-step
  int prediction_samples = 0;
  std::uint64_t seed = 0;
};

struct PcgStatRow {
  int solve_id = 0;
  int iterations = 0;
  double final_residual = 0.0;
};

// Kernelised EM: Matheron E-steps, preconditioner rebuilt after every alpha
// update, gamma_hat from the scaled forward map of the samples.
EmState run_dual_em(std::shared_ptr<const DesignOperator> op,
                    const NoisePrecision& noise, const PriorPrecision& prior0,
                    const Eigen::VectorXd& y, const Eigen::VectorXd& delta,
                    const DualEmOptions& options,
                    std::vector<PcgStatRow>* pcg_stats = nullptr);

}  // namespace linsamp
