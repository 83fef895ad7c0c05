#include "linsamp/synthetic.hpp"

#include <Eigen/QR>
#include <Eigen/SparseCore>
#include <cmath>
#include <numbers>
#include <vector>

#include "linsamp/errors.hpp"
#include "linsamp/rng.hpp"

namespace linsamp {
namespace {

Eigen::MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols,
                                   Rng& rng) {
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) g.col(c) = rng.gaussian_vector(rows);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

SyntheticInstance identity_instance(const SyntheticSpec& spec) {
  SyntheticInstance inst;
  inst.spec = spec;
  inst.spec.n = 2;
  inst.spec.m = 1;
  inst.spec.d = 2;
  inst.op = std::make_shared<DenseDesign>(Eigen::MatrixXd::Identity(2, 2), 1);
  inst.noise = NoisePrecision::identity(2, 1);
  inst.y.resize(2);
  inst.y << 2.0, 4.0;
  inst.theta_true = inst.y;
  return inst;
}

}  // namespace

SyntheticInstance gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.identity) return identity_instance(spec);
  require(spec.n > 0 && spec.m > 0 && spec.d > 0,
          "synthetic: dimensions must be positive");
  require(spec.alpha_true > 0, "synthetic: alpha_true must be positive");
  require(spec.noise_precision > 0,
          "synthetic: noise precision must be positive");
  require(spec.conditioning >= 0, "synthetic: conditioning must be >= 0");

  SyntheticInstance inst;
  inst.spec = spec;
  const Eigen::Index nm = spec.n * spec.m;

  Rng design_rng = Rng::stream(seed, "design");
  if (spec.sparse) {
    require(spec.sparse_fill > 0 && spec.sparse_fill <= 1,
            "synthetic: sparse fill must lie in (0, 1]");
    std::vector<Eigen::Triplet<double>> triplets;
    const auto want = static_cast<std::uint64_t>(
        spec.sparse_fill * static_cast<double>(nm * spec.d));
    for (std::uint64_t t = 0; t < want; ++t) {
      const auto r = static_cast<Eigen::Index>(
          design_rng.next_below(static_cast<std::uint64_t>(nm)));
      const auto c = static_cast<Eigen::Index>(
          design_rng.next_below(static_cast<std::uint64_t>(spec.d)));
      triplets.emplace_back(r, c, design_rng.next_gaussian());
    }
    // every column keeps at least one entry
    for (Eigen::Index c = 0; c < spec.d; ++c) {
      const auto r = static_cast<Eigen::Index>(
          design_rng.next_below(static_cast<std::uint64_t>(nm)));
      triplets.emplace_back(r, c, design_rng.next_gaussian());
    }
    Eigen::SparseMatrix<double> phi(nm, spec.d);
    phi.setFromTriplets(triplets.begin(), triplets.end());
    inst.op = std::make_shared<SparseDesign>(std::move(phi), spec.m);
  } else {
    const Eigen::Index rank = std::min(nm, spec.d);
    const Eigen::MatrixXd u = random_orthonormal(nm, rank, design_rng);
    const Eigen::MatrixXd v = random_orthonormal(spec.d, rank, design_rng);
    Eigen::VectorXd sigma(rank);
    for (Eigen::Index i = 0; i < rank; ++i) {
      const double t = rank > 1 ? static_cast<double>(i) /
                                      static_cast<double>(rank - 1)
                                : 0.0;
      sigma[i] = std::pow(10.0, -spec.conditioning * t);
    }
    inst.op = std::make_shared<DenseDesign>(
        Eigen::MatrixXd(u * sigma.asDiagonal() * v.transpose()), spec.m);
  }

  Rng noise_shape_rng = Rng::stream(seed, "noise-shape");
  if (spec.correlated_noise) {
    std::vector<Eigen::MatrixXd> blocks;
    blocks.reserve(static_cast<std::size_t>(spec.n));
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      Eigen::MatrixXd g(spec.m, spec.m);
      for (Eigen::Index c = 0; c < spec.m; ++c)
        g.col(c) = noise_shape_rng.gaussian_vector(spec.m);
      Eigen::MatrixXd block =
          spec.noise_precision *
          (g * g.transpose() / static_cast<double>(spec.m) +
           0.5 * Eigen::MatrixXd::Identity(spec.m, spec.m));
      blocks.push_back(std::move(block));
    }
    inst.noise = NoisePrecision::from_blocks(std::move(blocks));
  } else {
    inst.noise =
        NoisePrecision::isotropic(spec.n, spec.m, spec.noise_precision);
  }

  Rng theta_rng = Rng::stream(seed, "prior");
  inst.theta_true =
      theta_rng.gaussian_vector(spec.d) / std::sqrt(spec.alpha_true);
  Rng noise_rng = Rng::stream(seed, "noise");
  inst.y = inst.op->apply(inst.theta_true) + inst.noise.sample_noise(noise_rng);
  return inst;
}

Dataset toy_regression_1d(Eigen::Index n, std::uint64_t seed) {
  require(n >= 2, "toy regression: need n >= 2");
  Dataset data;
  data.inputs.resize(n, 1);
  data.targets.resize(n, 1);
  Rng rng = Rng::stream(seed, "toy-regression");
  // Two input clusters with a gap, a smooth curve, and light noise.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double side = (i % 2 == 0) ? -1.0 : 1.0;
    const double x = side * (0.6 + 1.4 * rng.next_uniform());
    data.inputs(i, 0) = x;
    data.targets(i, 0) =
        std::sin(2.0 * x) + 0.25 * x + 0.1 * rng.next_gaussian();
  }
  return data;
}

Dataset toy_classification_2d(Eigen::Index n, std::uint64_t seed) {
  require(n >= 2, "toy classification: need n >= 2");
  Dataset data;
  data.inputs.resize(n, 2);
  data.targets = Eigen::MatrixXd::Zero(n, 2);
  Rng rng = Rng::stream(seed, "toy-classification");
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = label == 0 ? -1.0 : 1.0;
    const double cy = label == 0 ? -0.5 : 0.5;
    data.inputs(i, 0) = cx + 0.6 * rng.next_gaussian();
    data.inputs(i, 1) = cy + 0.6 * rng.next_gaussian();
    data.targets(i, label) = 1.0;
  }
  return data;
}

}  // namespace linsamp
