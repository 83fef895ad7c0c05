#pragma once

#include <Eigen/Core>

namespace linsamp {

// Observations: n inputs with m-dimensional targets. Inputs may be raw
// feature rows or absent (zero columns) when the design is given directly.
struct Dataset {
  Eigen::MatrixXd inputs;   // n x d (d may be 0)
  Eigen::MatrixXd targets;  // n x m

  Eigen::Index n() const { return targets.rows(); }
  Eigen::Index m() const { return targets.cols(); }
  Eigen::Index input_dim() const { return inputs.cols(); }

  // Y: vertical concatenation of the target rows.
  Eigen::VectorXd stacked_targets() const;

  void validate() const;
};

}  // namespace linsamp
