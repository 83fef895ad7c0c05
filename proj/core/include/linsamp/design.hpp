#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <memory>

namespace linsamp {

// Block-structured linear map Phi: R^{d'} -> R^{nm} assembled from
// per-datapoint m x d' blocks phi(x_i). Immutable after construction and
// shareable across threads.
class DesignOperator {
 public:
  virtual ~DesignOperator() = default;

  virtual Eigen::Index param_dim() const = 0;  // d'
  virtual Eigen::Index output_dim() const = 0;  // m
  virtual Eigen::Index num_data() const = 0;   // n
  Eigen::Index stacked_dim() const { return num_data() * output_dim(); }

  // out = phi(x_i) v
  virtual void apply_block(Eigen::Index i,
                           const Eigen::Ref<const Eigen::VectorXd>& v,
                           Eigen::Ref<Eigen::VectorXd> out) const = 0;
  // out = phi(x_i)^T u_i
  virtual void apply_block_transpose(Eigen::Index i,
                                     const Eigen::Ref<const Eigen::VectorXd>& u,
                                     Eigen::Ref<Eigen::VectorXd> out) const = 0;

  // Stacked forward map [phi(x_1)v; ...; phi(x_n)v].
  virtual Eigen::VectorXd apply(
      const Eigen::Ref<const Eigen::VectorXd>& v) const;
  // Adjoint of apply.
  virtual Eigen::VectorXd apply_transpose(
      const Eigen::Ref<const Eigen::VectorXd>& u) const;

  virtual Eigen::MatrixXd dense_block(Eigen::Index i) const;

  // Full nm x d' materialization; verification scale only.
  Eigen::MatrixXd dense() const;
  static constexpr Eigen::Index kDenseGuard = 4096;

 protected:
  void check_apply_shape(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  void check_transpose_shape(
      const Eigen::Ref<const Eigen::VectorXd>& u) const;
};

// Design held as one stacked dense matrix.
class DenseDesign final : public DesignOperator {
 public:
  DenseDesign(Eigen::MatrixXd stacked, Eigen::Index output_dim);

  Eigen::Index param_dim() const override { return phi_.cols(); }
  Eigen::Index output_dim() const override { return m_; }
  Eigen::Index num_data() const override { return phi_.rows() / m_; }

  void apply_block(Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& v,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void apply_block_transpose(Eigen::Index i,
                             const Eigen::Ref<const Eigen::VectorXd>& u,
                             Eigen::Ref<Eigen::VectorXd> out) const override;
  Eigen::VectorXd apply(
      const Eigen::Ref<const Eigen::VectorXd>& v) const override;
  Eigen::VectorXd apply_transpose(
      const Eigen::Ref<const Eigen::VectorXd>& u) const override;
  Eigen::MatrixXd dense_block(Eigen::Index i) const override;

  const Eigen::MatrixXd& matrix() const { return phi_; }

 private:
  Eigen::MatrixXd phi_;  // nm x d'
  Eigen::Index m_;
};

// Design held as a sparse stacked matrix (synthetic inverse problems).
class SparseDesign final : public DesignOperator {
 public:
  SparseDesign(Eigen::SparseMatrix<double> stacked, Eigen::Index output_dim);

  Eigen::Index param_dim() const override { return phi_.cols(); }
  Eigen::Index output_dim() const override { return m_; }
  Eigen::Index num_data() const override { return phi_.rows() / m_; }

  void apply_block(Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& v,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void apply_block_transpose(Eigen::Index i,
                             const Eigen::Ref<const Eigen::VectorXd>& u,
                             Eigen::Ref<Eigen::VectorXd> out) const override;
  Eigen::VectorXd apply(
      const Eigen::Ref<const Eigen::VectorXd>& v) const override;
  Eigen::VectorXd apply_transpose(
      const Eigen::Ref<const Eigen::VectorXd>& u) const override;

  const Eigen::SparseMatrix<double>& matrix() const { return phi_; }

 private:
  Eigen::SparseMatrix<double> phi_;
  Eigen::Index m_;
};

// phi'(x) = phi(x) diag(s): feature normalisation wrapper.
class ScaledDesign final : public DesignOperator {
 public:
  ScaledDesign(std::shared_ptr<const DesignOperator> base,
               Eigen::VectorXd scale);

  Eigen::Index param_dim() const override { return base_->param_dim(); }
  Eigen::Index output_dim() const override { return base_->output_dim(); }
  Eigen::Index num_data() const override { return base_->num_data(); }

  void apply_block(Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& v,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void apply_block_transpose(Eigen::Index i,
                             const Eigen::Ref<const Eigen::VectorXd>& u,
                             Eigen::Ref<Eigen::VectorXd> out) const override;
  Eigen::VectorXd apply(
      const Eigen::Ref<const Eigen::VectorXd>& v) const override;
  Eigen::VectorXd apply_transpose(
      const Eigen::Ref<const Eigen::VectorXd>& u) const override;

  const Eigen::VectorXd& scale() const { return scale_; }
  const DesignOperator& base() const { return *base_; }

 private:
  std::shared_ptr<const DesignOperator> base_;
  Eigen::VectorXd scale_;
};

// Multiplies the feature columns in [begin, end) by a constant factor.
// Models the per-block feature-scale indeterminacy introduced by
// normalisation layers.
class BlockRescaledDesign final : public DesignOperator {
 public:
  BlockRescaledDesign(std::shared_ptr<const DesignOperator> base,
                      Eigen::Index begin, Eigen::Index end, double factor);

  Eigen::Index param_dim() const override { return base_->param_dim(); }
  Eigen::Index output_dim() const override { return base_->output_dim(); }
  Eigen::Index num_data() const override { return base_->num_data(); }

  void apply_block(Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& v,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void apply_block_transpose(Eigen::Index i,
                             const Eigen::Ref<const Eigen::VectorXd>& u,
                             Eigen::Ref<Eigen::VectorXd> out) const override;

 private:
  Eigen::VectorXd scaled(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  std::shared_ptr<const DesignOperator> base_;
  Eigen::Index begin_;
  Eigen::Index end_;
  double factor_;
};

}  // namespace linsamp
