#include "linsamp/design.hpp"

#include "linsamp/errors.hpp"

namespace linsamp {

void DesignOperator::check_apply_shape(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require(v.size() == param_dim(), "design: vector length != d'");
  require(v.allFinite(), "design: non-finite input vector");
}

void DesignOperator::check_transpose_shape(
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  require(u.size() == stacked_dim(), "design: vector length != n*m");
  require(u.allFinite(), "design: non-finite input vector");
}

Eigen::VectorXd DesignOperator::apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  check_apply_shape(v);
  const Eigen::Index m = output_dim();
  Eigen::VectorXd out(stacked_dim());
  for (Eigen::Index i = 0; i < num_data(); ++i)
    apply_block(i, v, out.segment(i * m, m));
  return out;
}

Eigen::VectorXd DesignOperator::apply_transpose(
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  check_transpose_shape(u);
  const Eigen::Index m = output_dim();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(param_dim());
  Eigen::VectorXd scratch(param_dim());
  for (Eigen::Index i = 0; i < num_data(); ++i) {
    apply_block_transpose(i, u.segment(i * m, m), scratch);
    out += scratch;
  }
  return out;
}

Eigen::MatrixXd DesignOperator::dense_block(Eigen::Index i) const {
  const Eigen::Index m = output_dim();
  const Eigen::Index d = param_dim();
  Eigen::MatrixXd block(m, d);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd row(d);
  for (Eigen::Index r = 0; r < m; ++r) {
    unit[r] = 1.0;
    apply_block_transpose(i, unit, row);
    block.row(r) = row;
    unit[r] = 0.0;
  }
  return block;
}

Eigen::MatrixXd DesignOperator::dense() const {
  require(param_dim() <= kDenseGuard,
          "design: dense materialization guarded to d' <= 4096");
  const Eigen::Index m = output_dim();
  Eigen::MatrixXd full(stacked_dim(), param_dim());
  for (Eigen::Index i = 0; i < num_data(); ++i)
    full.middleRows(i * m, m) = dense_block(i);
  return full;
}

// ---------------------------------------------------------------- dense

DenseDesign::DenseDesign(Eigen::MatrixXd stacked, Eigen::Index output_dim)
    : phi_(std::move(stacked)), m_(output_dim) {
  require(m_ > 0, "dense design: output dim must be positive");
  require(phi_.rows() % m_ == 0, "dense design: rows not a multiple of m");
  require(phi_.allFinite(), "dense design: non-finite entries");
}

void DenseDesign::apply_block(Eigen::Index i,
                              const Eigen::Ref<const Eigen::VectorXd>& v,
                              Eigen::Ref<Eigen::VectorXd> out) const {
  check_apply_shape(v);
  out = phi_.middleRows(i * m_, m_) * v;
}

void DenseDesign::apply_block_transpose(
    Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& u,
    Eigen::Ref<Eigen::VectorXd> out) const {
  require(u.size() == m_, "dense design: block vector length != m");
  out = phi_.middleRows(i * m_, m_).transpose() * u;
}

Eigen::VectorXd DenseDesign::apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  check_apply_shape(v);
  return phi_ * v;
}

Eigen::VectorXd DenseDesign::apply_transpose(
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  check_transpose_shape(u);
  return phi_.transpose() * u;
}

Eigen::MatrixXd DenseDesign::dense_block(Eigen::Index i) const {
  return phi_.middleRows(i * m_, m_);
}

// ---------------------------------------------------------------- sparse

SparseDesign::SparseDesign(Eigen::SparseMatrix<double> stacked,
                           Eigen::Index output_dim)
    : phi_(std::move(stacked)), m_(output_dim) {
  require(m_ > 0, "sparse design: output dim must be positive");
  require(phi_.rows() % m_ == 0, "sparse design: rows not a multiple of m");
  phi_.makeCompressed();
}

void SparseDesign::apply_block(Eigen::Index i,
                               const Eigen::Ref<const Eigen::VectorXd>& v,
                               Eigen::Ref<Eigen::VectorXd> out) const {
  check_apply_shape(v);
  out = phi_.middleRows(i * m_, m_) * v;
}

void SparseDesign::apply_block_transpose(
    Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& u,
    Eigen::Ref<Eigen::VectorXd> out) const {
  require(u.size() == m_, "sparse design: block vector length != m");
  out = phi_.middleRows(i * m_, m_).transpose() * u;
}

Eigen::VectorXd SparseDesign::apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  check_apply_shape(v);
  return phi_ * v;
}

Eigen::VectorXd SparseDesign::apply_transpose(
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  check_transpose_shape(u);
  return phi_.transpose() * u;
}

// ---------------------------------------------------------------- scaled

ScaledDesign::ScaledDesign(std::shared_ptr<const DesignOperator> base,
                           Eigen::VectorXd scale)
    : base_(std::move(base)), scale_(std::move(scale)) {
  require(base_ != nullptr, "scaled design: null base");
  require(scale_.size() == base_->param_dim(),
          "scaled design: scale length != d'");
  require(scale_.allFinite() && (scale_.array() > 0).all(),
          "scaled design: scale entries must be finite and positive");
}

void ScaledDesign::apply_block(Eigen::Index i,
                               const Eigen::Ref<const Eigen::VectorXd>& v,
                               Eigen::Ref<Eigen::VectorXd> out) const {
  check_apply_shape(v);
  base_->apply_block(i, scale_.cwiseProduct(v), out);
}

void ScaledDesign::apply_block_transpose(
    Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& u,
    Eigen::Ref<Eigen::VectorXd> out) const {
  base_->apply_block_transpose(i, u, out);
  out.array() *= scale_.array();
}

Eigen::VectorXd ScaledDesign::apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  check_apply_shape(v);
  return base_->apply(scale_.cwiseProduct(v));
}

Eigen::VectorXd ScaledDesign::apply_transpose(
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  return scale_.cwiseProduct(base_->apply_transpose(u));
}

// ---------------------------------------------------------- block rescale

BlockRescaledDesign::BlockRescaledDesign(
    std::shared_ptr<const DesignOperator> base, Eigen::Index begin,
    Eigen::Index end, double factor)
    : base_(std::move(base)), begin_(begin), end_(end), factor_(factor) {
  require(base_ != nullptr, "block rescale: null base");
  require(0 <= begin_ && begin_ <= end_ && end_ <= base_->param_dim(),
          "block rescale: bad coordinate range");
  require(std::isfinite(factor_) && factor_ != 0.0,
          "block rescale: factor must be finite and nonzero");
}

Eigen::VectorXd BlockRescaledDesign::scaled(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd w = v;
  w.segment(begin_, end_ - begin_) *= factor_;
  return w;
}

void BlockRescaledDesign::apply_block(
    Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& v,
    Eigen::Ref<Eigen::VectorXd> out) const {
  check_apply_shape(v);
  base_->apply_block(i, scaled(v), out);
}

void BlockRescaledDesign::apply_block_transpose(
    Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& u,
    Eigen::Ref<Eigen::VectorXd> out) const {
  base_->apply_block_transpose(i, u, out);
  out.segment(begin_, end_ - begin_) *= factor_;
}

}  // namespace linsamp
