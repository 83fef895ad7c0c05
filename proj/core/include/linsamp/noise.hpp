#pragma once

#include <Eigen/Core>
#include <vector>

namespace linsamp {

class Rng;

// Block-diagonal noise precision B with PSD m x m blocks B_i. Blocks are
// factored on construction: Cholesky when strictly PD, otherwise a clamped
// eigendecomposition acting as the declared pseudo-factor.
class NoisePrecision {
 public:
  NoisePrecision() = default;  // empty placeholder; factories build real ones

  static NoisePrecision identity(Eigen::Index n, Eigen::Index m);
  static NoisePrecision isotropic(Eigen::Index n, Eigen::Index m,
                                  double precision);
  static NoisePrecision from_blocks(std::vector<Eigen::MatrixXd> blocks);

  Eigen::Index num_data() const { return static_cast<Eigen::Index>(blocks_.size()); }
  Eigen::Index output_dim() const { return m_; }
  Eigen::Index stacked_dim() const { return num_data() * m_; }

  const Eigen::MatrixXd& block(Eigen::Index i) const { return blocks_[i]; }
  bool strictly_pd() const { return pd_; }

  // B u
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  // B^{-1} u; requires strictly PD blocks.
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  // u^T B u; valid for PSD blocks.
  double quad_form(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  double block_quad_form(Eigen::Index i,
                         const Eigen::Ref<const Eigen::VectorXd>& u) const;

  // E ~ N(0, B^{-1}); requires strictly PD blocks.
  Eigen::VectorXd sample_noise(Rng& rng) const;
  // w ~ N(0, B); works for PSD blocks via the rank-deficient factor.
  // Distributed as B*E for E ~ N(0, B^{-1}) when B is PD.
  Eigen::VectorXd sample_cov(Rng& rng) const;

  double log_det() const;  // log det B; requires strictly PD blocks

 private:
  void factor();

  std::vector<Eigen::MatrixXd> blocks_;
  std::vector<Eigen::MatrixXd> chol_;        // L with B = L L^T (PD only)
  std::vector<Eigen::MatrixXd> cov_factor_;  // F with F F^T = B
  Eigen::Index m_ = 0;
  bool pd_ = false;
};

}  // namespace linsamp
