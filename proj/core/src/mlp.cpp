#include "linsamp/mlp.hpp"

#include <cmath>

#include "linsamp/errors.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {

std::vector<int> DifferentiableModel::layer_map() const {
  return std::vector<int>(static_cast<std::size_t>(param_dim()), 0);
}

LinearModel::LinearModel(Eigen::VectorXd weights)
    : weights_(std::move(weights)) {
  require(weights_.size() > 0, "linear model: empty weights");
}

Eigen::VectorXd LinearModel::forward(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  require(x.size() == weights_.size(), "linear model: input length mismatch");
  Eigen::VectorXd out(1);
  out[0] = weights_.dot(x);
  return out;
}

Eigen::VectorXd LinearModel::jvp(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require(v.size() == weights_.size(), "linear model: tangent length mismatch");
  Eigen::VectorXd out(1);
  out[0] = v.dot(x);
  return out;
}

Eigen::VectorXd LinearModel::vjp(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& u) const {
  require(u.size() == 1, "linear model: cotangent length mismatch");
  return u[0] * x;
}

// ------------------------------------------------------------------- mlp

struct Mlp::Views {
  Eigen::Map<const Eigen::MatrixXd> w1, w2, w3;
  Eigen::Map<const Eigen::VectorXd> b1, b2, b3;
};

Mlp::Views Mlp::views(const Eigen::VectorXd& params) const {
  const double* p = params.data();
  const Eigen::Index h = hidden_, d = input_dim_, m = output_dim_;
  Eigen::Index at = 0;
  auto w1 = Eigen::Map<const Eigen::MatrixXd>(p + at, h, d);
  at += h * d;
  auto b1 = Eigen::Map<const Eigen::VectorXd>(p + at, h);
  at += h;
  auto w2 = Eigen::Map<const Eigen::MatrixXd>(p + at, h, h);
  at += h * h;
  auto b2 = Eigen::Map<const Eigen::VectorXd>(p + at, h);
  at += h;
  auto w3 = Eigen::Map<const Eigen::MatrixXd>(p + at, m, h);
  at += m * h;
  auto b3 = Eigen::Map<const Eigen::VectorXd>(p + at, m);
  return Views{w1, w2, w3, b1, b2, b3};
}

Mlp::Mlp(Eigen::Index input_dim, Eigen::Index output_dim, Eigen::Index hidden,
         std::uint64_t seed)
    : input_dim_(input_dim), output_dim_(output_dim), hidden_(hidden) {
  require(input_dim_ > 0 && output_dim_ > 0 && hidden_ > 0,
          "mlp: dimensions must be positive");
  const Eigen::Index total = hidden_ * input_dim_ + hidden_ +
                             hidden_ * hidden_ + hidden_ +
                             output_dim_ * hidden_ + output_dim_;
  Rng rng = Rng::stream(seed, "mlp-init");
  params_ = rng.gaussian_vector(total);
  // Scale each weight matrix by 1/sqrt(fan_in); biases start at zero.
  Eigen::Index at = 0;
  auto scale_block = [&](Eigen::Index rows, Eigen::Index cols, bool bias) {
    const Eigen::Index size = rows * cols;
    if (bias)
      params_.segment(at, size).setZero();
    else
      params_.segment(at, size) /= std::sqrt(static_cast<double>(cols));
    at += size;
  };
  scale_block(hidden_, input_dim_, false);
  scale_block(hidden_, 1, true);
  scale_block(hidden_, hidden_, false);
  scale_block(hidden_, 1, true);
  scale_block(output_dim_, hidden_, false);
  scale_block(output_dim_, 1, true);
}

void Mlp::set_parameters(const Eigen::VectorXd& params) {
  require(params.size() == params_.size(), "mlp: parameter length mismatch");
  params_ = params;
}

Eigen::VectorXd Mlp::forward_at(
    const Eigen::Ref<const Eigen::VectorXd>& params,
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  require(params.size() == params_.size(), "mlp: parameter length mismatch");
  require(x.size() == input_dim_, "mlp: input length mismatch");
  const Eigen::VectorXd p = params;  // owning copy for the maps
  const Views v = views(p);
  const Eigen::VectorXd a1 = (v.w1 * x + v.b1).array().tanh();
  const Eigen::VectorXd a2 = (v.w2 * a1 + v.b2).array().tanh();
  return v.w3 * a2 + v.b3;
}

Eigen::VectorXd Mlp::forward(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return forward_at(params_, x);
}

Eigen::VectorXd Mlp::jvp(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& v) const {
  require(x.size() == input_dim_, "mlp: input length mismatch");
  require(v.size() == params_.size(), "mlp: tangent length mismatch");
  const Views w = views(params_);
  const Eigen::VectorXd tangent = v;
  const Views t = views(tangent);

  const Eigen::VectorXd a1 = (w.w1 * x + w.b1).array().tanh();
  const Eigen::VectorXd a2 = (w.w2 * a1 + w.b2).array().tanh();

  const Eigen::ArrayXd g1 = 1.0 - a1.array().square();
  const Eigen::ArrayXd g2 = 1.0 - a2.array().square();

  const Eigen::VectorXd da1 = (g1 * (t.w1 * x + t.b1).array()).matrix();
  const Eigen::VectorXd da2 =
      (g2 * (t.w2 * a1 + w.w2 * da1 + t.b2).array()).matrix();
  return t.w3 * a2 + w.w3 * da2 + t.b3;
}

Eigen::VectorXd Mlp::vjp(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& u) const {
  require(x.size() == input_dim_, "mlp: input length mismatch");
  require(u.size() == output_dim_, "mlp: cotangent length mismatch");
  const Views w = views(params_);

  const Eigen::VectorXd a1 = (w.w1 * x + w.b1).array().tanh();
  const Eigen::VectorXd a2 = (w.w2 * a1 + w.b2).array().tanh();

  const Eigen::VectorXd gz2 =
      ((1.0 - a2.array().square()) * (w.w3.transpose() * u).array()).matrix();
  const Eigen::VectorXd gz1 =
      ((1.0 - a1.array().square()) * (w.w2.transpose() * gz2).array())
          .matrix();

  Eigen::VectorXd grad(params_.size());
  Eigen::Index at = 0;
  auto put_matrix = [&](const Eigen::MatrixXd& g) {
    grad.segment(at, g.size()) =
        Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    at += g.size();
  };
  auto put_vector = [&](const Eigen::VectorXd& g) {
    grad.segment(at, g.size()) = g;
    at += g.size();
  };
  put_matrix(gz1 * x.transpose());
  put_vector(gz1);
  put_matrix(gz2 * a1.transpose());
  put_vector(gz2);
  put_matrix(u * a2.transpose());
  put_vector(u);
  return grad;
}

std::vector<int> Mlp::layer_map() const {
  std::vector<int> map(static_cast<std::size_t>(param_dim()));
  Eigen::Index at = 0;
  auto tag = [&](Eigen::Index count, int layer) {
    for (Eigen::Index i = 0; i < count; ++i)
      map[static_cast<std::size_t>(at++)] = layer;
  };
  tag(hidden_ * input_dim_ + hidden_, 0);
  tag(hidden_ * hidden_ + hidden_, 1);
  tag(output_dim_ * hidden_ + output_dim_, 2);
  return map;
}

}  // namespace linsamp
