#pragma once

#include <Eigen/Core>
#include <memory>
#include <span>
#include <vector>

#include "linsamp/dataset.hpp"
#include "linsamp/design.hpp"
#include "linsamp/mlp.hpp"
#include "linsamp/noise.hpp"
#include "linsamp/prior.hpp"
#include "linsamp/sgd.hpp"

namespace linsamp {

class Rng;

enum class Likelihood { kGaussian, kCategorical };

struct LikelihoodSpec {
  Likelihood kind = Likelihood::kGaussian;
  double sigma2 = 1.0;  // Gaussian observation variance
};

// Design operator whose blocks are the model Jacobians phi(x_i), accessed
// only through jvp/vjp.
class JacobianDesign final : public DesignOperator {
 public:
  JacobianDesign(std::shared_ptr<const DifferentiableModel> model,
                 Eigen::MatrixXd inputs);

  Eigen::Index param_dim() const override { return model_->param_dim(); }
  Eigen::Index output_dim() const override { return model_->output_dim(); }
  Eigen::Index num_data() const override { return inputs_.rows(); }

  void apply_block(Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& v,
                   Eigen::Ref<Eigen::VectorXd> out) const override;
  void apply_block_transpose(Eigen::Index i,
                             const Eigen::Ref<const Eigen::VectorXd>& u,
                             Eigen::Ref<Eigen::VectorXd> out) const override;

  const DifferentiableModel& model() const { return *model_; }

 private:
  std::shared_ptr<const DifferentiableModel> model_;
  Eigen::MatrixXd inputs_;  // n x d
};

// First-order surrogate h(theta, x) = f(w, x) + phi(x)(theta - w), stored as
// the Jacobian design plus per-datapoint affine offsets c_i = f - phi(x_i) w.
struct SurrogateModel {
  std::shared_ptr<const DesignOperator> design;
  Eigen::MatrixXd base_predictions;  // n x m: f(w, x_i)
  Eigen::VectorXd offsets;           // stacked c_i
  LikelihoodSpec likelihood;

  // Target offset delta = Phi w - f(w, .) = -c; zero when constants cancel.
  Eigen::VectorXd target_offset() const { return -offsets; }
};

// Builds the surrogate; adjoint consistency of jvp/vjp is probed and a
// failure raises ModelDefinitionError.
SurrogateModel linearize(std::shared_ptr<const DifferentiableModel> model,
                         const Dataset& data, LikelihoodSpec likelihood);

// Per-datapoint loss curvature at the network predictions: sigma^{-2} I for
// Gaussian, diag(p) - p p^T with p = softmax(f) for categorical.
NoisePrecision curvature_blocks(LikelihoodSpec likelihood,
                                const Eigen::MatrixXd& predictions);

struct PredictiveSampleSet {
  Eigen::VectorXd x;
  Eigen::VectorXd base;        // f(w, x)
  Eigen::MatrixXd deviations;  // k x m rows phi(x) zeta_j
};

// k jvp calls; `scale` carries the g-prior vector when samples live in
// normalised coordinates.
PredictiveSampleSet predictive_samples(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    std::span<const Eigen::VectorXd> samples, const DifferentiableModel& model,
    const Eigen::VectorXd* scale = nullptr);

// softmax(f ./ sqrt(1 + pi/(2k) sum_j (phi zeta_j).^2))
Eigen::VectorXd probit_predict(const Eigen::VectorXd& logits,
                               const Eigen::MatrixXd& deviations);

// One resampled evaluation batch: kappa distinct items with multiplicities
// summing to tau.
struct KadicSet {
  std::vector<Eigen::Index> items;
  std::vector<int> multiplicities;
};

// Average joint log-likelihood over kappa-adic sets:
// log 1/k sum_j exp(sum_l b_l loglik(item_l, sample j)).
// `loglik` holds log p(y_i | sample j) per item (rows) and sample (cols).
double kadic_joint_ll(const Eigen::MatrixXd& loglik, int kappa, int tau,
                      int shuffles, Rng& rng);
double kadic_joint_ll_over_sets(const Eigen::MatrixXd& loglik,
                                std::span<const KadicSet> sets);
std::vector<KadicSet> draw_kadic_sets(Eigen::Index num_items, int kappa,
                                      int tau, int shuffles, Rng& rng);

// Sigma = 1/(2k) sum_j [diag(x_j.^2) + x_j x_j^T]
Eigen::MatrixXd stabilized_covariance(const Eigen::MatrixXd& deviations);

// Quadratic/cross-entropy mode of the surrogate loss sum_i l(y_i, c_i +
// phi(x_i) theta) + 1/2 |theta|^2_A. `scale` applies g-prior coordinates.
Eigen::VectorXd surrogate_posterior_mode(const SurrogateModel& surrogate,
                                         const Dataset& data,
                                         const PriorPrecision& prior,
                                         const SgdConfig& config,
                                         const Eigen::VectorXd* warm_start
                                         = nullptr);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double log_sum_exp(const Eigen::VectorXd& values);

}  // namespace linsamp
