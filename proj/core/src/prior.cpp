#include "linsamp/prior.hpp"

#include <algorithm>
#include <cmath>

#include "linsamp/errors.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {

void validate_layer_map(const std::vector<int>& layer_map, Eigen::Index dim) {
  require(static_cast<Eigen::Index>(layer_map.size()) == dim,
          "layer map: size != d'");
  require(!layer_map.empty(), "layer map: empty");
  const int num_layers = *std::max_element(layer_map.begin(), layer_map.end()) + 1;
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(num_layers), 0);
  for (int id : layer_map) {
    require(id >= 0 && id < num_layers, "layer map: id out of range");
    counts[static_cast<std::size_t>(id)]++;
  }
  for (Eigen::Index c : counts)
    require(c > 0, "layer map: empty layer");
}

PriorPrecision PriorPrecision::isotropic(Eigen::Index dim, double alpha) {
  require(dim > 0, "prior: dimension must be positive");
  require(alpha > 0 && std::isfinite(alpha), "prior: alpha must be positive");
  PriorPrecision a;
  a.variant_ = PriorVariant::kIsotropic;
  a.alpha_ = alpha;
  a.diag_ = Eigen::VectorXd::Constant(dim, alpha);
  return a;
}

PriorPrecision PriorPrecision::diagonal(double alpha, Eigen::VectorXd s) {
  require(alpha > 0 && std::isfinite(alpha), "prior: alpha must be positive");
  require(s.size() > 0, "prior: empty scale vector");
  require(s.allFinite() && (s.array() > 0).all(),
          "prior: scale entries must be finite and positive");
  PriorPrecision a;
  a.variant_ = PriorVariant::kDiagonal;
  a.alpha_ = alpha;
  a.s_ = std::move(s);
  a.rebuild_diag();
  return a;
}

PriorPrecision PriorPrecision::layerwise(Eigen::VectorXd alphas,
                                         std::vector<int> layer_map) {
  require(alphas.size() > 0, "prior: empty layer alphas");
  require(alphas.allFinite() && (alphas.array() > 0).all(),
          "prior: layer alphas must be positive");
  validate_layer_map(layer_map, static_cast<Eigen::Index>(layer_map.size()));
  const int num_layers =
      *std::max_element(layer_map.begin(), layer_map.end()) + 1;
  require(alphas.size() == num_layers, "prior: alphas size != layer count");
  PriorPrecision a;
  a.variant_ = PriorVariant::kLayerwise;
  a.alphas_ = std::move(alphas);
  a.layer_map_ = std::move(layer_map);
  a.rebuild_diag();
  return a;
}

void PriorPrecision::rebuild_diag() {
  switch (variant_) {
    case PriorVariant::kIsotropic:
      diag_.setConstant(diag_.size(), alpha_);
      break;
    case PriorVariant::kDiagonal:
      diag_ = alpha_ * s_.array().square().inverse().matrix();
      break;
    case PriorVariant::kLayerwise:
      diag_.resize(static_cast<Eigen::Index>(layer_map_.size()));
      for (Eigen::Index i = 0; i < diag_.size(); ++i)
        diag_[i] = alphas_[layer_map_[static_cast<std::size_t>(i)]];
      break;
  }
}

Eigen::Index PriorPrecision::num_layers() const {
  return variant_ == PriorVariant::kLayerwise ? alphas_.size() : 1;
}

double PriorPrecision::alpha() const {
  require(variant_ != PriorVariant::kLayerwise,
          "prior: scalar alpha undefined for layerwise variant");
  return alpha_;
}

const Eigen::VectorXd& PriorPrecision::alphas() const {
  require(variant_ == PriorVariant::kLayerwise,
          "prior: per-layer alphas only defined for layerwise variant");
  return alphas_;
}

const std::vector<int>& PriorPrecision::layer_map() const {
  require(variant_ == PriorVariant::kLayerwise,
          "prior: layer map only defined for layerwise variant");
  return layer_map_;
}

Eigen::VectorXd PriorPrecision::alpha_vector() const {
  if (variant_ == PriorVariant::kLayerwise) return alphas_;
  Eigen::VectorXd v(1);
  v[0] = alpha_;
  return v;
}

PriorPrecision PriorPrecision::with_alpha(double alpha) const {
  require(alpha > 0 && std::isfinite(alpha), "prior: alpha must be positive");
  require(variant_ != PriorVariant::kLayerwise,
          "prior: use with_alphas for the layerwise variant");
  PriorPrecision a = *this;
  a.alpha_ = alpha;
  if (variant_ == PriorVariant::kIsotropic)
    a.diag_ = Eigen::VectorXd::Constant(dim(), alpha);
  else
    a.rebuild_diag();
  return a;
}

PriorPrecision PriorPrecision::with_alphas(const Eigen::VectorXd& alphas) const {
  require(variant_ == PriorVariant::kLayerwise,
          "prior: with_alphas requires the layerwise variant");
  require(alphas.size() == alphas_.size(), "prior: layer count mismatch");
  require(alphas.allFinite() && (alphas.array() > 0).all(),
          "prior: layer alphas must be positive");
  PriorPrecision a = *this;
  a.alphas_ = alphas;
  a.rebuild_diag();
  return a;
}

Eigen::VectorXd PriorPrecision::apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require(v.size() == dim(), "prior: vector length != d'");
  return diag_.cwiseProduct(v);
}

Eigen::VectorXd PriorPrecision::solve(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require(v.size() == dim(), "prior: vector length != d'");
  return v.cwiseQuotient(diag_);
}

double PriorPrecision::norm_sq(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require(v.size() == dim(), "prior: vector length != d'");
  return (diag_.array() * v.array().square()).sum();
}

Eigen::VectorXd PriorPrecision::sample(Rng& rng) const {
  return rng.gaussian_vector(dim()).cwiseQuotient(diag_.cwiseSqrt());
}

}  // namespace linsamp
