#include "linsamp/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "linsamp/errors.hpp"

namespace linsamp {
namespace {

void check_categorical(const Eigen::VectorXd& p) {
  require(p.size() > 0, "sym_kl: empty distribution");
  require((p.array() >= 0).all(), "sym_kl: negative probability");
  require(std::abs(p.sum() - 1.0) <= 1e-8,
          "sym_kl: distribution not normalised");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success)
    throw FactorizationError("wasserstein2: eigendecomposition failed");
  return eig.eigenvectors() *
         eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

double sym_kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
              double epsilon) {
  check_categorical(p);
  check_categorical(q);
  require(p.size() == q.size(), "sym_kl: size mismatch");
  require(epsilon > 0 && epsilon < 1.0 / static_cast<double>(p.size()),
          "sym_kl: epsilon out of range");
  const double keep = 1.0 - epsilon * static_cast<double>(p.size());
  const Eigen::ArrayXd ps = p.array() * keep + epsilon;
  const Eigen::ArrayXd qs = q.array() * keep + epsilon;
  return ((ps - qs) * (ps.log() - qs.log())).sum();
}

GaussianFit fit_gaussian(const Eigen::MatrixXd& samples) {
  require(samples.rows() >= 2, "fit_gaussian: need at least two samples");
  GaussianFit fit;
  fit.mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - fit.mean.transpose();
  fit.cov = centered.transpose() * centered /
            static_cast<double>(samples.rows() - 1);
  return fit;
}

double wasserstein2(const GaussianFit& a, const GaussianFit& b) {
  require(a.mean.size() == b.mean.size(), "wasserstein2: size mismatch");
  require(a.cov.rows() == a.mean.size() && b.cov.rows() == b.mean.size(),
          "wasserstein2: covariance shape mismatch");
  const Eigen::MatrixXd root_a = psd_sqrt(a.cov);
  const Eigen::MatrixXd cross = psd_sqrt(root_a * b.cov * root_a);
  const double squared = (a.mean - b.mean).squaredNorm() + a.cov.trace() +
                         b.cov.trace() - 2.0 * cross.trace();
  return std::sqrt(std::max(0.0, squared));
}

EvalMetrics eval_metrics(const Eigen::VectorXd& categorical_a,
                         const Eigen::VectorXd& categorical_b,
                         const GaussianFit& logits_a,
                         const GaussianFit& logits_b) {
  EvalMetrics out;
  out.sym_kl = sym_kl(categorical_a, categorical_b);
  out.w2 = wasserstein2(logits_a, logits_b);
  return out;
}

}  // namespace linsamp
