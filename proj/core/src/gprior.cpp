#include "linsamp/gprior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "linsamp/errors.hpp"

namespace linsamp {
namespace {

// Turns raw inverse-sqrt diagonal values into a floored scale vector.
GPriorScale finalize_scale(Eigen::VectorXd raw, const GPriorOptions& options) {
  std::vector<double> finite;
  finite.reserve(static_cast<std::size_t>(raw.size()));
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    if (std::isfinite(raw[i])) finite.push_back(raw[i]);
  require(!finite.empty(), "g-prior: every feature has zero second moment");

  auto mid = finite.begin() + finite.size() / 2;
  std::nth_element(finite.begin(), mid, finite.end());
  double median = *mid;
  if (finite.size() % 2 == 0) {
    auto lower = std::max_element(finite.begin(), mid);
    median = 0.5 * (median + *lower);
  }
  const double cap = options.floor_multiplier * median;
  require(cap > 0 && std::isfinite(cap), "g-prior: invalid floor cap");
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    raw[i] = std::min(raw[i], cap);
  return GPriorScale{std::move(raw)};
}

}  // namespace

GPriorScale gprior_exact(const DesignOperator& op, const NoisePrecision& noise,
                         const GPriorOptions& options) {
  require(noise.num_data() == op.num_data() &&
              noise.output_dim() == op.output_dim(),
          "g-prior: design and noise shapes disagree");
  const Eigen::Index d = op.param_dim();
  Eigen::VectorXd raw(d);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    unit[j] = 1.0;
    const double diag = noise.quad_form(op.apply(unit));  // [Phi^T B Phi]_jj
    raw[j] = diag > 0 ? 1.0 / std::sqrt(diag)
                      : std::numeric_limits<double>::infinity();
    unit[j] = 0.0;
  }
  return finalize_scale(std::move(raw), options);
}

GPriorScale gprior_from_second_moment(const Eigen::VectorXd& second_moment,
                                      double alpha,
                                      const GPriorOptions& options) {
  require(alpha > 0 && std::isfinite(alpha), "g-prior: alpha must be positive");
  require(second_moment.size() > 0 && (second_moment.array() >= 0).all(),
          "g-prior: second moment must be nonnegative");
  Eigen::VectorXd raw(second_moment.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    raw[i] = second_moment[i] > 0
                 ? 1.0 / (alpha * std::sqrt(second_moment[i]))
                 : std::numeric_limits<double>::infinity();
  return finalize_scale(std::move(raw), options);
}

GPriorScale gprior_sampled(const std::vector<Eigen::VectorXd>& theta_primes,
                           double alpha, const GPriorOptions& options) {
  require(!theta_primes.empty(), "g-prior: need at least one theta'");
  Eigen::VectorXd second = Eigen::VectorXd::Zero(theta_primes.front().size());
  for (const auto& tp : theta_primes) {
    require(tp.size() == second.size(), "g-prior: theta' length mismatch");
    second.array() += tp.array().square();
  }
  second /= static_cast<double>(theta_primes.size());
  return gprior_from_second_moment(second, alpha, options);
}

std::shared_ptr<const DesignOperator> apply_gprior(
    std::shared_ptr<const DesignOperator> op, const GPriorScale& scale) {
  require(op != nullptr, "g-prior: null design");
  return std::make_shared<ScaledDesign>(std::move(op), scale.s);
}

}  // namespace linsamp
