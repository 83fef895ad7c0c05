#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>

#include "linsamp/dataset.hpp"
#include "linsamp/design.hpp"
#include "linsamp/noise.hpp"

namespace linsamp {

// Synthetic conjugate instances drawn from the generative model
// Y = Phi theta + E with theta ~ N(0, alpha_true^{-1} I), E ~ N(0, B^{-1}).
struct SyntheticSpec {
  Eigen::Index n = 10;
  Eigen::Index m = 2;
  Eigen::Index d = 6;          // d'
  double conditioning = 1.0;   // log10 spread of the design singular values
  double alpha_true = 1.0;
  double noise_precision = 1.0;
  bool correlated_noise = false;  // random SPD blocks instead of isotropic
  bool sparse = false;            // sparse design (inverse-problem stand-in)
  double sparse_fill = 0.05;
  bool identity = false;          // the exact 2x2 identity fixture
};

struct SyntheticInstance {
  std::shared_ptr<const DesignOperator> op;
  NoisePrecision noise;
  Eigen::VectorXd y;
  Eigen::VectorXd theta_true;
  SyntheticSpec spec;
};

SyntheticInstance gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Seeded toy sets for the built-in demo: a gappy 1-D regression curve and a
// two-blob 2-D binary classification problem (one-hot targets).
Dataset toy_regression_1d(Eigen::Index n, std::uint64_t seed);
Dataset toy_classification_2d(Eigen::Index n, std::uint64_t seed);

}  // namespace linsamp
