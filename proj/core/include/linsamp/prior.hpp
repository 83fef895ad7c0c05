#pragma once

#include <Eigen/Core>
#include <vector>

namespace linsamp {

class Rng;

enum class PriorVariant { kIsotropic, kDiagonal, kLayerwise };

// Prior precision A in one of three diagonal-structured forms:
//   isotropic  A = alpha I
//   diagonal   A = alpha diag(s^{-2})   (g-prior formulation)
//   layerwise  A_ii = alpha_{layer(i)}
class PriorPrecision {
 public:
  PriorPrecision() = default;  // empty placeholder; factories build real ones

  static PriorPrecision isotropic(Eigen::Index dim, double alpha);
  static PriorPrecision diagonal(double alpha, Eigen::VectorXd s);
  static PriorPrecision layerwise(Eigen::VectorXd alphas,
                                  std::vector<int> layer_map);

  PriorVariant variant() const { return variant_; }
  Eigen::Index dim() const { return diag_.size(); }
  Eigen::Index num_layers() const;

  // Dense diagonal of A.
  const Eigen::VectorXd& diag() const { return diag_; }

  double alpha() const;                 // isotropic / diagonal scale
  const Eigen::VectorXd& alphas() const;  // layerwise scales
  const std::vector<int>& layer_map() const;

  // Scale vector as a layerwise-compatible vector: [alpha] for scalar
  // variants, per-layer alphas otherwise.
  Eigen::VectorXd alpha_vector() const;

  PriorPrecision with_alpha(double alpha) const;
  PriorPrecision with_alphas(const Eigen::VectorXd& alphas) const;

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  double norm_sq(const Eigen::Ref<const Eigen::VectorXd>& v) const;  // |v|^2_A

  // theta0 ~ N(0, A^{-1})
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  void rebuild_diag();

  PriorVariant variant_ = PriorVariant::kIsotropic;
  double alpha_ = 1.0;
  Eigen::VectorXd s_;       // diagonal variant only
  Eigen::VectorXd alphas_;  // layerwise variant only
  std::vector<int> layer_map_;
  Eigen::VectorXd diag_;
};

// Checks that layer ids form a partition 0..L-1 with no empty layer.
void validate_layer_map(const std::vector<int>& layer_map, Eigen::Index dim);

}  // namespace linsamp
