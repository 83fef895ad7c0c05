#include "linsamp/dataset.hpp"

#include "linsamp/errors.hpp"

namespace linsamp {

Eigen::VectorXd Dataset::stacked_targets() const {
  Eigen::VectorXd y(targets.size());
  for (Eigen::Index i = 0; i < targets.rows(); ++i)
    y.segment(i * targets.cols(), targets.cols()) = targets.row(i);
  return y;
}

void Dataset::validate() const {
  require(inputs.rows() == 0 || inputs.rows() == targets.rows(),
          "dataset: inputs and targets disagree on n");
  require(targets.allFinite(), "dataset: non-finite target");
  require(inputs.size() == 0 || inputs.allFinite(),
          "dataset: non-finite input");
}

}  // namespace linsamp
