#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace linsamp {

// A differentiable predictor exposed through forward, Jacobian-vector and
// vector-Jacobian products at a fixed linearisation point. Implementations
// are immutable once trained; jvp/vjp are pure and thread-safe.
class DifferentiableModel {
 public:
  virtual ~DifferentiableModel() = default;

  virtual Eigen::Index param_dim() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;

  virtual const Eigen::VectorXd& parameters() const = 0;
  virtual Eigen::VectorXd forward(
      const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  // d/dt f(w + t v, x) at t = 0
  virtual Eigen::VectorXd jvp(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& v)
      const = 0;
  // (df/dw)^T u
  virtual Eigen::VectorXd vjp(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& u)
      const = 0;

  // Coordinate -> layer id; single layer unless overridden.
  virtual std::vector<int> layer_map() const;
};

// f(w, x) = <w, x>
class LinearModel final : public DifferentiableModel {
 public:
  explicit LinearModel(Eigen::VectorXd weights);

  Eigen::Index param_dim() const override { return weights_.size(); }
  Eigen::Index input_dim() const override { return weights_.size(); }
  Eigen::Index output_dim() const override { return 1; }
  const Eigen::VectorXd& parameters() const override { return weights_; }
  Eigen::VectorXd forward(
      const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  Eigen::VectorXd jvp(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& v) const override;
  Eigen::VectorXd vjp(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& u) const override;

 private:
  Eigen::VectorXd weights_;
};

// Two tanh hidden layers and a linear read-out, with hand-written forward
// and reverse passes. Parameters flatten as [W1, b1, W2, b2, W3, b3].
class Mlp final : public DifferentiableModel {
 public:
  Mlp(Eigen::Index input_dim, Eigen::Index output_dim, Eigen::Index hidden = 16,
      std::uint64_t seed = 0);

  Eigen::Index param_dim() const override { return params_.size(); }
  Eigen::Index input_dim() const override { return input_dim_; }
  Eigen::Index output_dim() const override { return output_dim_; }
  const Eigen::VectorXd& parameters() const override { return params_; }
  void set_parameters(const Eigen::VectorXd& params);

  Eigen::VectorXd forward(
      const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  // Forward pass at arbitrary parameters; used by finite-difference probes.
  Eigen::VectorXd forward_at(const Eigen::Ref<const Eigen::VectorXd>& params,
                             const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd jvp(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& v) const override;
  Eigen::VectorXd vjp(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& u) const override;

  // One layer id per (W, b) pair: 0, 1, 2.
  std::vector<int> layer_map() const override;
  Eigen::Index hidden_dim() const { return hidden_; }

 private:
  struct Views;  // weight/bias segments of a flat parameter vector
  Views views(const Eigen::VectorXd& params) const;

  Eigen::Index input_dim_;
  Eigen::Index output_dim_;
  Eigen::Index hidden_;
  Eigen::VectorXd params_;
};

}  // namespace linsamp
