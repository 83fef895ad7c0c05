#include "linsamp/dual.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>

#include "linsamp/errors.hpp"
#include "linsamp/parallel.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {

KernelOperator::KernelOperator(std::shared_ptr<const DesignOperator> op,
                               PriorPrecision prior, NoisePrecision noise)
    : op_(std::move(op)), prior_(std::move(prior)), noise_(std::move(noise)) {
  require(op_ != nullptr, "kernel: null design");
  require(prior_.dim() == op_->param_dim(),
          "kernel: design and prior dimensions disagree");
  require(noise_.num_data() == op_->num_data() &&
              noise_.output_dim() == op_->output_dim(),
          "kernel: design and noise shapes disagree");
  if (!noise_.strictly_pd())
    throw FactorizationError(
        "kernel: the dual form requires strictly PD noise blocks");
  // Smallest eigenvalue of B^{-1} across blocks: 1 / max eig(B_i).
  double max_eig = 0.0;
  for (Eigen::Index i = 0; i < noise_.num_data(); ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(noise_.block(i));
    max_eig = std::max(max_eig, eig.eigenvalues().maxCoeff());
  }
  shift_ = 1.0 / max_eig;
}

Eigen::VectorXd KernelOperator::low_rank_apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require(v.size() == dim(), "kernel: vector length != n*m");
  return op_->apply(prior_.solve(op_->apply_transpose(v)));
}

Eigen::VectorXd KernelOperator::apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return low_rank_apply(v) + noise_.solve(v);
}

LowRankPreconditioner::LowRankPreconditioner(double shift,
                                             Eigen::MatrixXd basis,
                                             Eigen::VectorXd eigenvalues)
    : shift_(shift), basis_(std::move(basis)),
      eigenvalues_(std::move(eigenvalues)) {
  require(shift_ > 0 && std::isfinite(shift_),
          "preconditioner: shift must be positive");
  require(basis_.cols() == eigenvalues_.size(),
          "preconditioner: basis/eigenvalue size mismatch");
  require((eigenvalues_.array() >= 0).all(),
          "preconditioner: eigenvalues must be nonnegative");
}

Eigen::VectorXd LowRankPreconditioner::apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd out = shift_ * v;
  if (rank() > 0)
    out.noalias() +=
        basis_ * eigenvalues_.cwiseProduct(basis_.transpose() * v);
  return out;
}

Eigen::VectorXd LowRankPreconditioner::apply_inverse(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  // Woodbury with orthonormal basis: P^{-1} = s^{-1} I - Q diag(c) Q^T,
  // c_i = lambda_i / (s (s + lambda_i)).
  Eigen::VectorXd out = v / shift_;
  if (rank() > 0) {
    Eigen::VectorXd coeff =
        eigenvalues_.array() /
        (shift_ * (shift_ + eigenvalues_.array()));
    out.noalias() -= basis_ * coeff.cwiseProduct(basis_.transpose() * v);
  }
  return out;
}

LowRankPreconditioner build_preconditioner(const KernelOperator& kernel,
                                           Eigen::Index rank,
                                           Eigen::Index oversampling,
                                           Rng& rng) {
  const Eigen::Index n = kernel.dim();
  require(rank >= 0 && rank < n, "preconditioner: need 0 <= rank < nm");
  require(oversampling >= 0, "preconditioner: oversampling must be >= 0");
  const double shift = kernel.diagonal_shift();
  if (rank == 0)
    return LowRankPreconditioner(shift, Eigen::MatrixXd(n, 0),
                                 Eigen::VectorXd(0));

  // Sketch K - shift*I (PSD by choice of shift) with a Gaussian test matrix.
  const Eigen::Index width = std::min<Eigen::Index>(rank + oversampling, n);
  Eigen::MatrixXd omega(n, width);
  for (Eigen::Index c = 0; c < width; ++c)
    omega.col(c) = rng.gaussian_vector(n);

  auto shifted_apply = [&](const Eigen::VectorXd& v) {
    return Eigen::VectorXd(kernel.apply(v) - shift * v);
  };

  Eigen::MatrixXd sketch(n, width);
  parallel_for(width, [&](std::ptrdiff_t c) {
    sketch.col(c) = shifted_apply(omega.col(c));
  });

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(sketch);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, width);

  Eigen::MatrixXd kq(n, width);
  parallel_for(width, [&](std::ptrdiff_t c) {
    kq.col(c) = shifted_apply(q.col(c));
  });
  Eigen::MatrixXd small = q.transpose() * kq;
  small = 0.5 * (small + small.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(small);
  if (eig.info() != Eigen::Success)
    throw FactorizationError("preconditioner: projected eigensolve failed");

  // Keep the top `rank` eigenpairs (solver returns ascending order).
  Eigen::VectorXd values(rank);
  Eigen::MatrixXd vectors(width, rank);
  for (Eigen::Index i = 0; i < rank; ++i) {
    values[i] = std::max(0.0, eig.eigenvalues()[width - 1 - i]);
    vectors.col(i) = eig.eigenvectors().col(width - 1 - i);
  }
  return LowRankPreconditioner(shift, q * vectors, values);
}

PcgResult pcg_solve(const KernelOperator& kernel, const Eigen::VectorXd& rhs,
                    const LowRankPreconditioner* preconditioner,
                    const PcgConfig& config) {
  require(rhs.size() == kernel.dim(), "pcg: rhs length != nm");
  require(config.tol > 0, "pcg: tol must be positive");
  require(config.max_iter >= 1, "pcg: max_iter must be >= 1");

  PcgResult result;
  result.x = Eigen::VectorXd::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    result.converged = true;
    return result;
  }

  auto precondition = [&](const Eigen::VectorXd& r) {
    return preconditioner != nullptr ? preconditioner->apply_inverse(r)
                                     : Eigen::VectorXd(r);
  };
  auto true_residual = [&](const Eigen::VectorXd& x) {
    return (rhs - kernel.apply(x)).norm() / rhs_norm;
  };

  Eigen::VectorXd r = rhs;
  Eigen::VectorXd z = precondition(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);

  while (result.iterations < config.max_iter) {
    const Eigen::VectorXd kp = kernel.apply(p);
    const double pkp = p.dot(kp);
    ++result.iterations;
    if (!std::isfinite(pkp) || pkp <= 0)
      throw SolverError("pcg: operator lost positive-definiteness at iteration " +
                        std::to_string(result.iterations));
    const double alpha = rz / pkp;
    result.x += alpha * p;
    r -= alpha * kp;
    if (!r.allFinite())
      throw SolverError("pcg: non-finite residual at iteration " +
                        std::to_string(result.iterations));
    if (r.norm() <= config.tol * rhs_norm) {
      // Certify against a fresh residual before declaring victory.
      if (true_residual(result.x) <= config.tol) {
        result.converged = true;
        break;
      }
      r = rhs - kernel.apply(result.x);
      z = precondition(r);
      p = z;
      rz = r.dot(z);
      continue;
    }
    z = precondition(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  result.final_residual = true_residual(result.x);
  result.converged = result.final_residual <= config.tol;
  return result;
}

namespace {

Eigen::VectorXd pull_back(const KernelOperator& kernel,
                          const Eigen::VectorXd& c) {
  return kernel.prior().solve(kernel.design().apply_transpose(c));
}

void fill_info(const PcgResult& solve, DualSolveInfo* info) {
  if (info == nullptr) return;
  info->iterations = solve.iterations;
  info->final_residual = solve.final_residual;
  info->converged = solve.converged;
}

}  // namespace

Eigen::VectorXd matheron_sample(const Eigen::VectorXd& theta0,
                                const Eigen::VectorXd& noise,
                                const KernelOperator& kernel,
                                const LowRankPreconditioner* preconditioner,
                                const PcgConfig& config, DualSolveInfo* info) {
  require(theta0.size() == kernel.design().param_dim(),
          "matheron: theta0 length != d'");
  require(noise.size() == kernel.dim(), "matheron: noise length != nm");
  const Eigen::VectorXd rhs = noise - kernel.design().apply(theta0);
  PcgResult solve = pcg_solve(kernel, rhs, preconditioner, config);
  fill_info(solve, info);
  return theta0 + pull_back(kernel, solve.x);
}

Eigen::VectorXd dual_posterior_mean(const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& delta,
                                    const KernelOperator& kernel,
                                    const LowRankPreconditioner* preconditioner,
                                    const PcgConfig& config,
                                    DualSolveInfo* info) {
  require(y.size() == kernel.dim(), "dual mean: target length != nm");
  require(delta.size() == kernel.dim(), "dual mean: offset length != nm");
  PcgResult solve = pcg_solve(kernel, y + delta, preconditioner, config);
  fill_info(solve, info);
  return pull_back(kernel, solve.x);
}

EmState run_dual_em(std::shared_ptr<const DesignOperator> op,
                    const NoisePrecision& noise, const PriorPrecision& prior0,
                    const Eigen::VectorXd& y, const Eigen::VectorXd& delta,
                    const DualEmOptions& options,
                    std::vector<PcgStatRow>* pcg_stats) {
  require(op != nullptr, "dual em: null design");
  require(options.k >= 1, "dual em: k must be >= 1");
  require(options.max_steps >= 0, "dual em: max_steps must be >= 0");
  require(options.tol > 0, "dual em: tol must be positive");

  const Eigen::Index nm = op->stacked_dim();
  const Eigen::Index rank =
      options.precond_rank >= 0
          ? options.precond_rank
          : std::min<Eigen::Index>(400, std::max<Eigen::Index>(0, nm / 4));

  EmState state{prior0, Eigen::VectorXd(), {}, {}, {}, false, 0, op, {}};
  PriorPrecision prior = prior0;
  int next_solve_id = 0;

  auto record_stats = [&](const std::vector<DualSolveInfo>& infos) {
    if (pcg_stats == nullptr) {
      next_solve_id += static_cast<int>(infos.size());
      return;
    }
    for (const auto& info : infos)
      pcg_stats->push_back(
          PcgStatRow{next_solve_id++, info.iterations, info.final_residual});
  };

  auto draw_jobs = [&](std::uint64_t root, int count) {
    std::vector<SampleJob> jobs;
    jobs.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
      SampleJob job;
      job.index = j;
      Rng prior_rng = Rng::stream(root, "prior", static_cast<std::uint64_t>(j));
      Rng noise_rng = Rng::stream(root, "noise", static_cast<std::uint64_t>(j));
      job.theta0 = prior.sample(prior_rng);
      job.noise = noise.sample_noise(noise_rng);
      job.theta_prime = Eigen::VectorXd::Zero(prior.dim());
      job.z = job.theta0;
      jobs.push_back(std::move(job));
    }
    return jobs;
  };

  auto solve_samples = [&](const KernelOperator& kernel,
                           const LowRankPreconditioner& precond,
                           std::vector<SampleJob>& jobs) {
    std::vector<DualSolveInfo> infos(jobs.size());
    parallel_for(static_cast<std::ptrdiff_t>(jobs.size()),
                 [&](std::ptrdiff_t j) {
                   auto& job = jobs[static_cast<std::size_t>(j)];
                   job.z = matheron_sample(job.theta0, *job.noise, kernel,
                                           &precond, options.pcg,
                                           &infos[static_cast<std::size_t>(j)]);
                 });
    record_stats(infos);
    return infos;
  };

  for (int step = 1; step <= options.max_steps; ++step) {
    state.steps = step;
    KernelOperator kernel(op, prior, noise);
    Rng sketch_rng = Rng::stream(options.seed, "sketch",
                                 static_cast<std::uint64_t>(step));
    LowRankPreconditioner precond =
        build_preconditioner(kernel, rank, options.oversampling, sketch_rng);

    const PriorPrecision jobs_prior = prior;
    if (options.redraw_each_step || state.jobs.empty())
      state.jobs = draw_jobs(Rng::derive_key(options.seed, "dual-step",
                                             static_cast<std::uint64_t>(step)),
                             options.k);
    solve_samples(kernel, precond, state.jobs);

    DualSolveInfo mean_info;
    state.theta_bar = dual_posterior_mean(y, delta, kernel, &precond,
                                          options.pcg, &mean_info);
    record_stats({mean_info});

    std::vector<Eigen::VectorXd> zs;
    zs.reserve(state.jobs.size());
    for (const auto& job : state.jobs) zs.push_back(job.z);
    const double gamma_hat = estimate_gamma(zs, *op, noise);

    const double alpha_old = prior.alpha();
    const double alpha_new = mstep_update(gamma_hat, state.theta_bar);
    prior = prior.with_alpha(alpha_new);
    if (!options.redraw_each_step) {
      rescale_regularizers(state.jobs, jobs_prior, prior);
      for (auto& job : state.jobs) job.z = job.theta0;
    }

    state.trace.push_back(EmStepRow{step, prior.alpha_vector(), gamma_hat,
                                    state.theta_bar.squaredNorm()});
    if (std::abs(alpha_new - alpha_old) / alpha_old < options.tol) {
      state.converged = true;
      break;
    }
  }
  state.prior = prior;

  if (options.prediction_samples > 0) {
    KernelOperator kernel(op, prior, noise);
    Rng sketch_rng = Rng::stream(options.seed, "sketch-prediction");
    LowRankPreconditioner precond =
        build_preconditioner(kernel, rank, options.oversampling, sketch_rng);
    auto jobs = draw_jobs(Rng::derive_key(options.seed, "dual-prediction"),
                          options.prediction_samples);
    solve_samples(kernel, precond, jobs);
    state.prediction_samples.reserve(jobs.size());
    for (const auto& job : jobs)
      state.prediction_samples.push_back(job.z);
  }

  if (state.theta_bar.size() == 0) {
    KernelOperator kernel(op, prior, noise);
    Rng sketch_rng = Rng::stream(options.seed, "sketch-final");
    LowRankPreconditioner precond =
        build_preconditioner(kernel, rank, options.oversampling, sketch_rng);
    DualSolveInfo mean_info;
    state.theta_bar = dual_posterior_mean(y, delta, kernel, &precond,
                                          options.pcg, &mean_info);
    record_stats({mean_info});
  }
  return state;
}

}  // namespace linsamp
