#include <benchmark/benchmark.h>

#include "linsamp/dual.hpp"
#include "linsamp/em.hpp"
#include "linsamp/rng.hpp"
#include "linsamp/sampler.hpp"
#include "linsamp/synthetic.hpp"

namespace {

using namespace linsamp;

SyntheticInstance bench_instance(Eigen::Index n, Eigen::Index m,
                                 Eigen::Index d, double conditioning) {
  SyntheticSpec spec;
  spec.n = n;
  spec.m = m;
  spec.d = d;
  spec.conditioning = conditioning;
  return gen_synthetic(spec, 7);
}

void BM_KernelMatvec(benchmark::State& state) {
  const auto inst = bench_instance(state.range(0), 2, 96, 2.0);
  KernelOperator kernel(inst.op, PriorPrecision::isotropic(96, 1.0),
                        inst.noise);
  Rng rng(11);
  Eigen::VectorXd v = rng.gaussian_vector(kernel.dim());
  for (auto _ : state) benchmark::DoNotOptimize(kernel.apply(v));
}
BENCHMARK(BM_KernelMatvec)->Arg(64)->Arg(256);

void BM_PcgSolve(benchmark::State& state) {
  const auto inst = bench_instance(state.range(0), 2, 96, 3.0);
  KernelOperator kernel(inst.op, PriorPrecision::isotropic(96, 1.0),
                        inst.noise);
  Rng sketch(5);
  const auto precond = build_preconditioner(kernel, 32, 10, sketch);
  Rng rng(13);
  Eigen::VectorXd rhs = rng.gaussian_vector(kernel.dim());
  PcgConfig config{1e-8, 400};
  for (auto _ : state)
    benchmark::DoNotOptimize(pcg_solve(kernel, rhs, &precond, config));
}
BENCHMARK(BM_PcgSolve)->Arg(64)->Arg(128);

void BM_SampleSgd(benchmark::State& state) {
  const auto inst = bench_instance(48, 2, static_cast<Eigen::Index>(state.range(0)), 1.0);
  const PriorPrecision prior =
      PriorPrecision::isotropic(inst.op->param_dim(), 1.0);
  SgdConfig config;
  config.learning_rate = 0.3;
  config.batch_size = inst.op->num_data();
  config.epochs = 60;
  config.clip_norm = 0.0;
  for (auto _ : state) {
    auto jobs = make_sample_jobs(*inst.op, inst.noise, prior, 1, 3);
    benchmark::DoNotOptimize(sgd_minimize(jobs[0], *inst.op, inst.noise, prior,
                                          config, LossVariant::kLPrime));
  }
}
BENCHMARK(BM_SampleSgd)->Arg(32)->Arg(96);

void BM_GammaEstimate(benchmark::State& state) {
  const auto inst = bench_instance(64, 2, 96, 1.0);
  Rng rng(17);
  std::vector<Eigen::VectorXd> samples;
  for (int j = 0; j < state.range(0); ++j)
    samples.push_back(rng.gaussian_vector(96));
  for (auto _ : state)
    benchmark::DoNotOptimize(estimate_gamma(samples, *inst.op, inst.noise));
}
BENCHMARK(BM_GammaEstimate)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
