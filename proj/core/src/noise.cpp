#include "linsamp/noise.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "linsamp/errors.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {

NoisePrecision NoisePrecision::identity(Eigen::Index n, Eigen::Index m) {
  return isotropic(n, m, 1.0);
}

NoisePrecision NoisePrecision::isotropic(Eigen::Index n, Eigen::Index m,
                                         double precision) {
  require(precision > 0 && std::isfinite(precision),
          "noise: precision must be positive");
  std::vector<Eigen::MatrixXd> blocks(
      static_cast<std::size_t>(n),
      precision * Eigen::MatrixXd::Identity(m, m));
  return from_blocks(std::move(blocks));
}

NoisePrecision NoisePrecision::from_blocks(
    std::vector<Eigen::MatrixXd> blocks) {
  require(!blocks.empty(), "noise: need at least one block");
  NoisePrecision b;
  b.m_ = blocks.front().rows();
  for (const auto& blk : blocks) {
    require(blk.rows() == b.m_ && blk.cols() == b.m_,
            "noise: blocks must share one square size");
    require(blk.allFinite(), "noise: non-finite block");
    const double scale = std::max(1.0, blk.cwiseAbs().maxCoeff());
    require((blk - blk.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
            "noise: block not symmetric within 1e-12");
  }
  b.blocks_ = std::move(blocks);
  b.factor();
  return b;
}

void NoisePrecision::factor() {
  chol_.clear();
  cov_factor_.clear();
  pd_ = true;
  for (const auto& blk : blocks_) {
    Eigen::LLT<Eigen::MatrixXd> llt(blk);
    if (llt.info() == Eigen::Success) {
      chol_.push_back(llt.matrixL());
      cov_factor_.push_back(llt.matrixL());
      continue;
    }
    pd_ = false;
    chol_.emplace_back();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(blk);
    if (eig.info() != Eigen::Success)
      throw FactorizationError("noise: eigendecomposition failed");
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    require(eig.eigenvalues().minCoeff() >= -1e-10 * scale,
            "noise: block has a significantly negative eigenvalue");
    Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
    cov_factor_.push_back(eig.eigenvectors() *
                          clamped.cwiseSqrt().asDiagonal());
  }
}

Eigen::VectorXd NoisePrecision::apply(
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  require(u.size() == stacked_dim(), "noise: vector length != n*m");
  Eigen::VectorXd out(u.size());
  for (Eigen::Index i = 0; i < num_data(); ++i)
    out.segment(i * m_, m_) = blocks_[i] * u.segment(i * m_, m_);
  return out;
}

Eigen::VectorXd NoisePrecision::solve(
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  require(u.size() == stacked_dim(), "noise: vector length != n*m");
  if (!pd_)
    throw FactorizationError(
        "noise: B^{-1} requested for a singular block without pseudo-factor");
  Eigen::VectorXd out(u.size());
  for (Eigen::Index i = 0; i < num_data(); ++i) {
    Eigen::VectorXd w =
        chol_[i].triangularView<Eigen::Lower>().solve(u.segment(i * m_, m_));
    out.segment(i * m_, m_) =
        chol_[i].transpose().triangularView<Eigen::Upper>().solve(w);
  }
  return out;
}

double NoisePrecision::quad_form(
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  require(u.size() == stacked_dim(), "noise: vector length != n*m");
  double total = 0.0;
  for (Eigen::Index i = 0; i < num_data(); ++i)
    total += block_quad_form(i, u.segment(i * m_, m_));
  return total;
}

double NoisePrecision::block_quad_form(
    Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& u) const {
  require(u.size() == m_, "noise: block vector length != m");
  return u.dot(blocks_[i] * u);
}

Eigen::VectorXd NoisePrecision::sample_noise(Rng& rng) const {
  if (!pd_)
    throw FactorizationError(
        "noise: sampling N(0, B^{-1}) requires strictly PD blocks");
  Eigen::VectorXd out(stacked_dim());
  for (Eigen::Index i = 0; i < num_data(); ++i) {
    Eigen::VectorXd z = rng.gaussian_vector(m_);
    out.segment(i * m_, m_) =
        chol_[i].transpose().triangularView<Eigen::Upper>().solve(z);
  }
  return out;
}

Eigen::VectorXd NoisePrecision::sample_cov(Rng& rng) const {
  Eigen::VectorXd out(stacked_dim());
  for (Eigen::Index i = 0; i < num_data(); ++i)
    out.segment(i * m_, m_) = cov_factor_[i] * rng.gaussian_vector(m_);
  return out;
}

double NoisePrecision::log_det() const {
  if (!pd_)
    throw FactorizationError("noise: log det of a singular B");
  double total = 0.0;
  for (const auto& l : chol_) total += 2.0 * l.diagonal().array().log().sum();
  return total;
}

}  // namespace linsamp
