#include "linsamp/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "linsamp/csv.hpp"
#include "linsamp/dual.hpp"
#include "linsamp/em.hpp"
#include "linsamp/errors.hpp"
#include "linsamp/gprior.hpp"
#include "linsamp/linlap.hpp"
#include "linsamp/metrics.hpp"
#include "linsamp/oracle.hpp"
#include "linsamp/parallel.hpp"
#include "linsamp/rng.hpp"
#include "linsamp/sampler.hpp"
#include "linsamp/version.hpp"

namespace linsamp::runner {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

SgdConfig sgd_from_config(const Config& c, std::uint64_t seed) {
  SgdConfig sgd;
  sgd.learning_rate = c.get_double("sgd.lr", 0.1);
  sgd.momentum = c.get_double("sgd.momentum", 0.9);
  sgd.batch_size = c.get_int("sgd.batch", 16);
  sgd.epochs = static_cast<int>(c.get_int("sgd.epochs", 60));
  sgd.decay_factor = c.get_double("sgd.decay_factor", 330.0);
  sgd.decay_fraction = c.get_double("sgd.decay_fraction", 0.75);
  sgd.clip_norm = c.get_double("sgd.clip_norm", 1.0);
  sgd.seed = seed;
  return sgd;
}

std::vector<int> equal_layer_map(Eigen::Index dim, int layers) {
  require(layers >= 1 && layers <= dim, "layers: need 1 <= layers <= d'");
  std::vector<int> map(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < dim; ++i)
    map[static_cast<std::size_t>(i)] = static_cast<int>(
        std::min<Eigen::Index>(i * layers / dim, layers - 1));
  return map;
}

void write_exact_trace(const fs::path& file,
                       const std::vector<ExactEmRow>& rows) {
  csv::TableWriter table(
      file, {"step", "alpha", "gamma", "theta_bar_sq_norm", "evidence_bound"});
  for (const auto& row : rows)
    table.row({static_cast<double>(row.step), row.alpha[0], row.gamma,
               row.theta_bar_sq_norm, row.evidence});
}

void write_exact_trace_layerwise(const fs::path& file,
                                 const std::vector<ExactEmRow>& rows,
                                 Eigen::Index layers) {
  std::vector<std::string> columns{"step"};
  for (Eigen::Index l = 0; l < layers; ++l)
    columns.push_back("alpha_" + std::to_string(l));
  columns.insert(columns.end(),
                 {"gamma", "theta_bar_sq_norm", "evidence_bound"});
  csv::TableWriter table(file, columns);
  for (const auto& row : rows) {
    std::vector<double> cells{static_cast<double>(row.step)};
    for (Eigen::Index l = 0; l < layers; ++l) cells.push_back(row.alpha[l]);
    cells.insert(cells.end(),
                 {row.gamma, row.theta_bar_sq_norm, row.evidence});
    table.row(cells);
  }
}

void write_em_trace(const fs::path& file, const std::vector<EmStepRow>& rows) {
  csv::TableWriter table(file,
                         {"step", "alpha", "gamma_hat", "theta_bar_sq_norm"});
  for (const auto& row : rows)
    table.row({static_cast<double>(row.step), row.alpha[0], row.gamma_hat,
               row.theta_bar_sq_norm});
}

void write_em_trace_layerwise(const fs::path& file,
                              const std::vector<EmStepRow>& rows,
                              Eigen::Index layers) {
  std::vector<std::string> columns{"step"};
  for (Eigen::Index l = 0; l < layers; ++l)
    columns.push_back("alpha_" + std::to_string(l));
  columns.insert(columns.end(), {"gamma_hat", "theta_bar_sq_norm"});
  csv::TableWriter table(file, columns);
  for (const auto& row : rows) {
    std::vector<double> cells{static_cast<double>(row.step)};
    for (Eigen::Index l = 0; l < layers; ++l) cells.push_back(row.alpha[l]);
    cells.insert(cells.end(), {row.gamma_hat, row.theta_bar_sq_norm});
    table.row(cells);
  }
}

Eigen::MatrixXd stacked_blocks(const NoisePrecision& noise) {
  const Eigen::Index m = noise.output_dim();
  Eigen::MatrixXd out(noise.stacked_dim(), m);
  for (Eigen::Index i = 0; i < noise.num_data(); ++i)
    out.middleRows(i * m, m) = noise.block(i);
  return out;
}

// ------------------------------------------------------------- gen-data

void run_gen_data(const ExperimentConfig& exp, RunResult& result) {
  const SyntheticSpec spec = spec_from_config(exp.options);
  const SyntheticInstance inst = gen_synthetic(spec, exp.seed);

  if (auto sparse = std::dynamic_pointer_cast<const SparseDesign>(inst.op)) {
    csv::write_sparse(exp.out_dir / "phi_coo.csv", sparse->matrix());
    result.outputs.push_back("phi_coo.csv");
  } else {
    csv::write_matrix(exp.out_dir / "phi.csv", inst.op->dense());
    result.outputs.push_back("phi.csv");
  }
  csv::write_matrix(exp.out_dir / "b_blocks.csv", stacked_blocks(inst.noise));
  result.outputs.push_back("b_blocks.csv");

  Dataset data;
  data.targets.resize(inst.op->num_data(), inst.op->output_dim());
  for (Eigen::Index i = 0; i < data.targets.rows(); ++i)
    data.targets.row(i) =
        inst.y.segment(i * data.targets.cols(), data.targets.cols());
  csv::write_dataset(exp.out_dir / "y.csv", data);
  result.outputs.push_back("y.csv");

  csv::write_matrix(exp.out_dir / "theta_true.csv", inst.theta_true);
  result.outputs.push_back("theta_true.csv");
  result.messages.push_back(
      "alpha_true=" + csv::format_double(inst.spec.alpha_true));
}

// ---------------------------------------------------------------- exact

void run_exact(const ExperimentConfig& exp, RunResult& result) {
  const Problem problem = resolve_problem(exp.options, exp.seed);
  ExactEmOptions options;
  options.max_steps = static_cast<int>(exp.options.get_int("method.em_steps", 50));
  options.tol = exp.options.get_double("method.tol", 1e-4);
  const double alpha0 = exp.options.get_double("method.alpha0", 1.0);

  const ExactEmResult em =
      exact_em(*problem.op, problem.noise, problem.y, alpha0, options);
  write_exact_trace(exp.out_dir / "em_trace.csv", em.trace);
  result.outputs.push_back("em_trace.csv");

  const int layers =
      static_cast<int>(exp.options.get_int("problem.layers", 1));
  if (layers > 1) {
    const auto map = equal_layer_map(problem.op->param_dim(), layers);
    const ExactEmResult lw = exact_em_layerwise(*problem.op, problem.noise,
                                                problem.y, map, alpha0,
                                                options);
    write_exact_trace_layerwise(exp.out_dir / "em_trace_layerwise.csv",
                                lw.trace, layers);
    result.outputs.push_back("em_trace_layerwise.csv");
  }
}

// ------------------------------------------------------- sample-fidelity

void run_sample_fidelity(const ExperimentConfig& exp, RunResult& result) {
  const Problem problem = resolve_problem(exp.options, exp.seed);
  const double alpha = exp.options.get_double("method.alpha0", 1.0);
  const int k = static_cast<int>(exp.options.get_int("method.k", 16));
  const PriorPrecision prior =
      PriorPrecision::isotropic(problem.op->param_dim(), alpha);
  SgdConfig sgd = sgd_from_config(exp.options, exp.seed);
  if (!exp.options.has("sgd.lr"))
    sgd.learning_rate =
        0.9 / (estimate_gram_lmax(*problem.op, problem.noise) + alpha);

  const auto jobs = make_sample_jobs(*problem.op, problem.noise, prior, k,
                                     exp.seed);
  const ExactPosterior posterior =
      exact_posterior(*problem.op, problem.noise, prior, problem.y);
  std::vector<Eigen::VectorXd> references;
  references.reserve(jobs.size());
  for (const auto& job : jobs)
    references.push_back(posterior.llt.solve(
        prior.apply(job.theta0) +
        problem.op->apply_transpose(problem.noise.apply(*job.noise))));

  struct VariantRun {
    LossVariant variant;
    std::string name;
    std::vector<std::vector<SgdTraceRow>> traces;
  };
  std::vector<VariantRun> runs{{LossVariant::kL, "l", {}},
                               {LossVariant::kLPrime, "lprime", {}}};
  for (auto& run : runs) {
    auto variant_jobs = jobs;
    run.traces.resize(variant_jobs.size());
    parallel_for(static_cast<std::ptrdiff_t>(variant_jobs.size()),
                 [&](std::ptrdiff_t j) {
                   const auto idx = static_cast<std::size_t>(j);
                   sgd_minimize(variant_jobs[idx], *problem.op, problem.noise,
                                prior, sgd, run.variant, &run.traces[idx],
                                &references[idx]);
                 });
    csv::TableWriter table(
        exp.out_dir / ("opt_trace_" + run.name + ".csv"),
        {"step", "sample_index", "objective", "sample_error"});
    for (std::size_t j = 0; j < run.traces.size(); ++j)
      for (const auto& row : run.traces[j])
        table.row({static_cast<double>(row.step), static_cast<double>(j),
                   row.objective, row.sample_error});
    result.outputs.push_back("opt_trace_" + run.name + ".csv");
  }

  // Per-step mean normalised squared error, one column per loss.
  csv::TableWriter errors(exp.out_dir / "sample_error.csv",
                          {"step", "sample_error_l", "sample_error_lprime"});
  const std::size_t rows = runs[0].traces.at(0).size();
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> cells{
        static_cast<double>(runs[0].traces[0][r].step)};
    for (const auto& run : runs) {
      double total = 0.0;
      for (const auto& trace : run.traces) total += trace.at(r).sample_error;
      cells.push_back(total / static_cast<double>(run.traces.size()));
    }
    errors.row(cells);
  }
  result.outputs.push_back("sample_error.csv");
}

// ------------------------------------------------------------------- em

void run_em_kind(const ExperimentConfig& exp, RunResult& result) {
  const Problem problem = resolve_problem(exp.options, exp.seed);
  const double alpha0 = exp.options.get_double("method.alpha0", 1.0);
  const std::string variant =
      exp.options.get_string("prior.variant", "isotropic");
  const int layers = static_cast<int>(exp.options.get_int("problem.layers", 1));

  EmOptions options;
  options.k = static_cast<int>(exp.options.get_int("method.k", 16));
  options.max_steps = static_cast<int>(exp.options.get_int("method.em_steps", 8));
  options.tol = exp.options.get_double("method.tol", 1e-3);
  options.redraw_each_step = exp.options.get_bool("method.redraw", false);
  options.prediction_samples =
      static_cast<int>(exp.options.get_int("method.prediction_samples", -1));
  options.variant = exp.options.get_string("method.loss", "lprime") == "l"
                        ? LossVariant::kL
                        : LossVariant::kLPrime;
  options.mode_sgd = sgd_from_config(exp.options, exp.seed);
  options.sample_sgd = options.mode_sgd;
  options.seed = exp.seed;
  options.auto_learning_rate = !exp.options.has("sgd.lr");
  if (exp.options.get_bool("gprior", false) || variant == "gprior")
    options.gprior = GPriorMode::kExact;
  else if (variant == "gprior-sampled")
    options.gprior = GPriorMode::kSampled;

  PriorPrecision prior =
      variant == "layerwise"
          ? PriorPrecision::layerwise(
                Eigen::VectorXd::Constant(layers, alpha0),
                equal_layer_map(problem.op->param_dim(), layers))
          : PriorPrecision::isotropic(problem.op->param_dim(), alpha0);

  const EmState state =
      run_em(problem.op, problem.noise, prior, problem.y, options);
  if (prior.variant() == PriorVariant::kLayerwise) {
    write_em_trace_layerwise(exp.out_dir / "em_trace_layerwise.csv",
                             state.trace, layers);
    result.outputs.push_back("em_trace_layerwise.csv");
  } else {
    write_em_trace(exp.out_dir / "em_trace.csv", state.trace);
    result.outputs.push_back("em_trace.csv");
  }

  if (exp.options.get_bool("method.compare", false)) {
    ExactEmOptions exact_options;
    exact_options.max_steps =
        static_cast<int>(exp.options.get_int("method.exact_steps", 50));
    exact_options.tol = exp.options.get_double("method.tol", 1e-3);
    const ExactEmResult exact =
        exact_em(*problem.op, problem.noise, problem.y, alpha0, exact_options);
    write_exact_trace(exp.out_dir / "em_trace_exact.csv", exact.trace);
    result.outputs.push_back("em_trace_exact.csv");
    if (layers > 1) {
      const auto map = equal_layer_map(problem.op->param_dim(), layers);
      const ExactEmResult lw =
          exact_em_layerwise(*problem.op, problem.noise, problem.y, map,
                             alpha0, exact_options);
      write_exact_trace_layerwise(exp.out_dir / "em_trace_exact_layerwise.csv",
                                  lw.trace, layers);
      result.outputs.push_back("em_trace_exact_layerwise.csv");
    }
  }
}

// -------------------------------------------------------------- dual-em

void run_dual_demo(const ExperimentConfig& exp, RunResult& result) {
  const Problem problem = resolve_problem(exp.options, exp.seed);
  const double alpha0 = exp.options.get_double("method.alpha0", 1.0);

  std::shared_ptr<const DesignOperator> op = problem.op;
  if (exp.options.get_bool("gprior", false))
    op = apply_gprior(op, gprior_exact(*op, problem.noise));

  Eigen::VectorXd delta = Eigen::VectorXd::Zero(op->stacked_dim());
  if (exp.options.has("problem.dir")) {
    const fs::path delta_file =
        fs::path(exp.options.get_string("problem.dir")) / "delta.csv";
    if (fs::exists(delta_file)) delta = csv::read_matrix(delta_file).col(0);
  }

  DualEmOptions options;
  options.k = static_cast<int>(exp.options.get_int("method.k", 2));
  options.max_steps = static_cast<int>(exp.options.get_int("method.em_steps", 8));
  options.tol = exp.options.get_double("method.tol", 1e-3);
  options.pcg.tol = exp.options.get_double("pcg.tol", 1e-3);
  options.pcg.max_iter = static_cast<int>(exp.options.get_int("pcg.max_iter", 150));
  options.precond_rank = exp.options.get_int("precond.rank", -1);
  options.oversampling = exp.options.get_int("precond.oversampling", 10);
  options.redraw_each_step = exp.options.get_bool("method.redraw", true);
  options.prediction_samples =
      static_cast<int>(exp.options.get_int("method.prediction_samples", 0));
  options.seed = exp.seed;

  std::vector<PcgStatRow> stats;
  const PriorPrecision prior =
      PriorPrecision::isotropic(op->param_dim(), alpha0);
  const EmState state =
      run_dual_em(op, problem.noise, prior, problem.y, delta, options, &stats);

  write_em_trace(exp.out_dir / "em_trace.csv", state.trace);
  result.outputs.push_back("em_trace.csv");

  csv::TableWriter pcg_table(exp.out_dir / "pcg_stats.csv",
                             {"solve_id", "iterations", "final_residual"});
  for (const auto& row : stats) {
    pcg_table.row({static_cast<double>(row.solve_id),
                   static_cast<double>(row.iterations), row.final_residual});
    if (row.final_residual > options.pcg.tol) {
      result.degraded = true;
      result.messages.push_back(
          "pcg solve " + std::to_string(row.solve_id) +
          " stopped at max_iter above tolerance");
    }
  }
  result.outputs.push_back("pcg_stats.csv");
}

// ---------------------------------------------------------- linlap-demo

struct DemoPipeline {
  std::shared_ptr<Mlp> model;
  Dataset data;
  SurrogateModel surrogate;
  NoisePrecision curvature;
  GPriorScale scale;
  std::shared_ptr<const DesignOperator> scaled_design;
  EmState em;
};

Eigen::VectorXd train_mlp(Mlp& model, const Dataset& data,
                          LikelihoodSpec likelihood, int epochs, double lr,
                          double weight_decay, std::uint64_t seed) {
  const bool categorical = likelihood.kind == Likelihood::kCategorical;
  const double inv_sigma2 = 1.0 / likelihood.sigma2;
  SgdProblem problem;
  problem.dim = model.param_dim();
  problem.num_data = data.n();

  // Gradients flow through vjp at the current parameters; the model object
  // is updated wholesale after the loop.
  Eigen::VectorXd params = model.parameters();
  auto with_params = [&](const Eigen::VectorXd& w) { model.set_parameters(w); };

  problem.gradient = [&](const Eigen::VectorXd& w,
                         std::span<const Eigen::Index> batch) {
    with_params(w);
    Eigen::VectorXd grad = weight_decay * w;
    for (Eigen::Index i : batch) {
      const Eigen::VectorXd x = data.inputs.row(i).transpose();
      const Eigen::VectorXd y = data.targets.row(i).transpose();
      const Eigen::VectorXd f = model.forward(x);
      const Eigen::VectorXd residual =
          categorical ? Eigen::VectorXd(softmax(f) - y)
                      : Eigen::VectorXd(inv_sigma2 * (f - y));
      grad += model.vjp(x, residual) * (static_cast<double>(data.n()) /
                                        static_cast<double>(batch.size()));
    }
    return grad;
  };
  problem.objective = [&](const Eigen::VectorXd& w) {
    with_params(w);
    double loss = 0.5 * weight_decay * w.squaredNorm();
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const Eigen::VectorXd x = data.inputs.row(i).transpose();
      const Eigen::VectorXd y = data.targets.row(i).transpose();
      const Eigen::VectorXd f = model.forward(x);
      loss += categorical ? log_sum_exp(f) - y.dot(f)
                          : 0.5 * inv_sigma2 * (f - y).squaredNorm();
    }
    return loss;
  };

  SgdConfig config;
  config.learning_rate = lr;
  config.batch_size = 16;
  config.epochs = epochs;
  config.clip_norm = 1.0;
  config.decay_factor = 10.0;
  config.seed = seed;
  Rng batch_rng = Rng::stream(seed, "train-batch");
  params = sgd_loop(problem, config, params, batch_rng);
  model.set_parameters(params);
  return params;
}

DemoPipeline demo_em(std::shared_ptr<Mlp> model, Dataset data,
                     LikelihoodSpec likelihood, double alpha0,
                     const EmOptions& base_options, std::uint64_t seed) {
  DemoPipeline pipe;
  pipe.model = std::move(model);
  pipe.data = std::move(data);
  pipe.surrogate =
      linearize(std::static_pointer_cast<const DifferentiableModel>(pipe.model),
                pipe.data, likelihood);
  pipe.curvature = curvature_blocks(likelihood, pipe.surrogate.base_predictions);
  pipe.scale = gprior_exact(*pipe.surrogate.design, pipe.curvature);
  pipe.scaled_design = apply_gprior(pipe.surrogate.design, pipe.scale);

  SurrogateModel scaled = pipe.surrogate;
  scaled.design = pipe.scaled_design;

  EmOptions options = base_options;
  options.seed = seed;
  options.mode_optimizer = [scaled, data = pipe.data](
                               const PriorPrecision& prior,
                               const SgdConfig& config,
                               const Eigen::VectorXd* warm) {
    return surrogate_posterior_mode(scaled, data, prior, config, warm);
  };

  const PriorPrecision prior =
      PriorPrecision::isotropic(pipe.scaled_design->param_dim(), alpha0);
  // The quadratic default path is unused (custom mode optimizer); targets
  // are still wired through for completeness.
  Eigen::VectorXd y_eff = pipe.data.stacked_targets();
  if (likelihood.kind == Likelihood::kGaussian)
    y_eff += pipe.surrogate.target_offset();
  pipe.em = run_em(pipe.scaled_design, pipe.curvature, prior, y_eff, options);
  return pipe;
}

double mean_predictive_std(const DemoPipeline& pipe,
                           const Eigen::MatrixXd& grid,
                           const std::vector<Eigen::VectorXd>& samples) {
  double total = 0.0;
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    const auto set = predictive_samples(grid.row(g).transpose(), samples,
                                        *pipe.model, &pipe.scale.s);
    const Eigen::VectorXd mean = set.deviations.colwise().mean();
    const double var =
        (set.deviations.rowwise() - mean.transpose()).squaredNorm() /
        (static_cast<double>(set.deviations.rows() - 1) *
         static_cast<double>(set.deviations.cols()));
    total += std::sqrt(var);
  }
  return total / static_cast<double>(grid.rows());
}

void run_linlap_demo(const ExperimentConfig& exp, RunResult& result) {
  const auto& c = exp.options;
  const double alpha0 = c.get_double("demo.alpha0", 1e-4);
  const double sigma2 = c.get_double("demo.sigma2", 0.01);
  const int hidden = static_cast<int>(c.get_int("demo.hidden", 8));
  const int n = static_cast<int>(c.get_int("demo.n", 64));
  const int train_epochs = static_cast<int>(c.get_int("demo.train_epochs", 500));

  EmOptions options;
  options.k = static_cast<int>(c.get_int("method.k", 16));
  options.max_steps = static_cast<int>(c.get_int("method.em_steps", 8));
  options.tol = c.get_double("method.tol", 1e-3);
  options.prediction_samples =
      static_cast<int>(c.get_int("method.prediction_samples", 64));
  options.mode_sgd = sgd_from_config(c, exp.seed);
  options.mode_sgd.epochs = static_cast<int>(c.get_int("sgd.epochs", 600));
  options.mode_sgd.batch_size = c.get_int("sgd.batch", 1u << 20);
  options.mode_sgd.clip_norm = c.get_double("sgd.clip_norm", 0.0);
  options.mode_sgd.decay_factor = c.get_double("sgd.decay_factor", 10.0);
  options.sample_sgd = options.mode_sgd;
  options.auto_learning_rate = !c.has("sgd.lr");

  // --- 1-D regression set: train, linearise, run EM
  // Training runs at unit noise scale; sigma2 enters through the curvature.
  Dataset regression = toy_regression_1d(n, exp.seed);
  auto mlp = std::make_shared<Mlp>(1, 1, hidden, Rng::derive_key(exp.seed, "mlp-reg"));
  train_mlp(*mlp, regression, LikelihoodSpec{Likelihood::kGaussian, 1.0},
            train_epochs, c.get_double("demo.train_lr", 0.02), 1e-4,
            Rng::derive_key(exp.seed, "train-reg"));

  DemoPipeline pipe =
      demo_em(mlp, regression, LikelihoodSpec{Likelihood::kGaussian, sigma2},
              alpha0, options, exp.seed);

  // Pre-EM reference run: prior-regularized solve at alpha0.
  EmOptions prior_options = options;
  prior_options.max_steps = 0;
  DemoPipeline prior_pipe =
      demo_em(mlp, regression, LikelihoodSpec{Likelihood::kGaussian, sigma2},
              alpha0, prior_options, Rng::derive_key(exp.seed, "prior-run"));

  Eigen::MatrixXd grid(121, 1);
  for (Eigen::Index g = 0; g < grid.rows(); ++g)
    grid(g, 0) = -3.0 + 6.0 * static_cast<double>(g) / 120.0;

  auto write_predictive = [&](const fs::path& file, const DemoPipeline& p) {
    csv::TableWriter table(file, {"x", "mean", "std"});
    for (Eigen::Index g = 0; g < grid.rows(); ++g) {
      const auto set =
          predictive_samples(grid.row(g).transpose(), p.em.prediction_samples,
                             *p.model, &p.scale.s);
      const double mean = set.base[0];
      const Eigen::VectorXd dev = set.deviations.col(0);
      const double centered =
          (dev.array() - dev.mean()).square().sum() /
          static_cast<double>(dev.size() - 1);
      table.row({grid(g, 0), mean, std::sqrt(centered)});
    }
  };
  write_predictive(exp.out_dir / "predictive.csv", pipe);
  result.outputs.push_back("predictive.csv");
  write_predictive(exp.out_dir / "predictive_prior.csv", prior_pipe);
  result.outputs.push_back("predictive_prior.csv");

  write_em_trace(exp.out_dir / "em_trace.csv", pipe.em.trace);
  result.outputs.push_back("em_trace.csv");

  // Exact EM on the same (conjugate) surrogate: the desk-scale ground truth.
  {
    Eigen::VectorXd y_eff =
        pipe.data.stacked_targets() + pipe.surrogate.target_offset();
    ExactEmOptions exact_options;
    exact_options.max_steps = 200;
    exact_options.tol = 1e-8;
    const ExactEmResult exact = exact_em(*pipe.scaled_design, pipe.curvature,
                                         y_eff, alpha0, exact_options);
    write_exact_trace(exp.out_dir / "em_trace_exact.csv", exact.trace);
    result.outputs.push_back("em_trace_exact.csv");
  }

  // Fixed-point residual from a warm verification E-step at the final
  // alpha: re-optimize mode and samples, then check alpha |theta|^2 = gamma.
  const double alpha_final = pipe.em.prior.alpha();
  SgdConfig verify_sgd = options.sample_sgd;
  verify_sgd.learning_rate =
      0.9 / (estimate_gram_lmax(*pipe.scaled_design, pipe.curvature) +
             alpha_final);
  SurrogateModel scaled_surrogate = pipe.surrogate;
  scaled_surrogate.design = pipe.scaled_design;
  const Eigen::VectorXd theta_check =
      surrogate_posterior_mode(scaled_surrogate, pipe.data, pipe.em.prior,
                               verify_sgd, &pipe.em.theta_bar);
  auto verify_jobs = pipe.em.jobs;
  parallel_for(static_cast<std::ptrdiff_t>(verify_jobs.size()),
               [&](std::ptrdiff_t j) {
                 sgd_minimize(verify_jobs[static_cast<std::size_t>(j)],
                              *pipe.scaled_design, pipe.curvature,
                              pipe.em.prior, verify_sgd, LossVariant::kLPrime);
               });
  std::vector<Eigen::VectorXd> verify_samples;
  verify_samples.reserve(verify_jobs.size());
  for (const auto& job : verify_jobs) verify_samples.push_back(job.z);
  const double gamma_pred =
      estimate_gamma(verify_samples, *pipe.scaled_design, pipe.curvature);
  const double theta_sq = theta_check.squaredNorm();
  const double residual = std::abs(alpha_final * theta_sq - gamma_pred);
  const double post_std = mean_predictive_std(pipe, grid,
                                              pipe.em.prediction_samples);
  const double prior_std = mean_predictive_std(
      prior_pipe, grid, prior_pipe.em.prediction_samples);

  csv::TableWriter summary(
      exp.out_dir / "demo_summary.csv",
      {"alpha_final", "gamma_pred", "theta_bar_sq_norm",
       "fixed_point_residual", "mean_pred_std", "mean_pred_std_prior"});
  summary.row({alpha_final, gamma_pred, theta_sq, residual, post_std,
               prior_std});
  result.outputs.push_back("demo_summary.csv");
  if (residual > 0.05 * gamma_pred) {
    result.degraded = true;
    result.messages.push_back("fixed-point residual above 5% of gamma");
  }
  if (post_std >= prior_std) {
    result.degraded = true;
    result.messages.push_back(
        "predictive std did not shrink relative to the prior run");
  }

  // --- 2-class 2-D classification set (Laplace path with PSD curvature)
  if (c.get_bool("demo.classification", true)) {
    Dataset cls = toy_classification_2d(
        static_cast<Eigen::Index>(c.get_int("demo.cls_n", 60)), exp.seed);
    auto cls_mlp = std::make_shared<Mlp>(2, 2, hidden,
                                         Rng::derive_key(exp.seed, "mlp-cls"));
    train_mlp(*cls_mlp, cls, LikelihoodSpec{Likelihood::kCategorical, 1.0},
              train_epochs, c.get_double("demo.train_lr", 0.02), 1e-4,
              Rng::derive_key(exp.seed, "train-cls"));
    EmOptions cls_options = options;
    cls_options.k = static_cast<int>(c.get_int("demo.cls_k", 8));
    DemoPipeline cls_pipe =
        demo_em(cls_mlp, cls, LikelihoodSpec{Likelihood::kCategorical, 1.0},
                c.get_double("demo.cls_alpha0", 1.0), cls_options,
                Rng::derive_key(exp.seed, "cls"));
    write_em_trace(exp.out_dir / "em_trace_cls.csv", cls_pipe.em.trace);
    result.outputs.push_back("em_trace_cls.csv");

    csv::TableWriter table(exp.out_dir / "predictive_cls.csv",
                           {"x1", "x2", "p_0", "p_1"});
    for (int gx = 0; gx < 21; ++gx) {
      for (int gy = 0; gy < 21; ++gy) {
        Eigen::VectorXd x(2);
        x << -3.0 + 0.3 * gx, -3.0 + 0.3 * gy;
        const auto set = predictive_samples(
            x, cls_pipe.em.prediction_samples, *cls_pipe.model,
            &cls_pipe.scale.s);
        const Eigen::VectorXd probs = probit_predict(set.base, set.deviations);
        table.row({x[0], x[1], probs[0], probs[1]});
      }
    }
    result.outputs.push_back("predictive_cls.csv");
  }
}

// ------------------------------------------------------------------ eval

void run_eval(const ExperimentConfig& exp, RunResult& result) {
  std::vector<fs::path> inputs = exp.inputs;
  if (inputs.empty()) {
    inputs.push_back(exp.options.get_string("eval.a"));
    inputs.push_back(exp.options.get_string("eval.b"));
  }
  require(inputs.size() == 2, "eval: need exactly two prediction files");
  const std::string kind = exp.options.get_string("eval.kind", "categorical");
  csv::TableWriter table(exp.out_dir / "metrics.csv", {"metric", "value"});
  if (kind == "categorical") {
    const Eigen::MatrixXd a = csv::read_matrix(inputs[0]);
    const Eigen::MatrixXd b = csv::read_matrix(inputs[1]);
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            "eval: prediction shapes disagree");
    const double eps = exp.options.get_double("eval.epsilon", 1e-12);
    double total = 0.0, worst = 0.0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double kl = sym_kl(a.row(r).transpose(), b.row(r).transpose(), eps);
      total += kl;
      worst = std::max(worst, kl);
    }
    table.raw_row({"sym_kl_mean",
                   csv::format_double(total / static_cast<double>(a.rows()))});
    table.raw_row({"sym_kl_max", csv::format_double(worst)});
  } else if (kind == "gaussian") {
    const GaussianFit fit_a = fit_gaussian(csv::read_matrix(inputs[0]));
    const GaussianFit fit_b = fit_gaussian(csv::read_matrix(inputs[1]));
    table.raw_row({"w2", csv::format_double(wasserstein2(fit_a, fit_b))});
  } else {
    throw ConfigError("eval: unknown kind " + kind);
  }
  result.outputs.push_back("metrics.csv");
}

}  // namespace

Kind kind_from_string(const std::string& name) {
  if (name == "gen-data") return Kind::kGenData;
  if (name == "exact") return Kind::kExact;
  if (name == "sample") return Kind::kSampleFidelity;
  if (name == "em") return Kind::kEm;
  if (name == "dual-em") return Kind::kDualDemo;
  if (name == "linlap-demo") return Kind::kLinlapDemo;
  if (name == "eval") return Kind::kEval;
  if (name == "plotdata") return Kind::kPlotData;
  throw ConfigError("unknown experiment kind: " + name);
}

std::string kind_to_string(Kind kind) {
  switch (kind) {
    case Kind::kGenData: return "gen-data";
    case Kind::kExact: return "exact";
    case Kind::kSampleFidelity: return "sample";
    case Kind::kEm: return "em";
    case Kind::kDualDemo: return "dual-em";
    case Kind::kLinlapDemo: return "linlap-demo";
    case Kind::kEval: return "eval";
    case Kind::kPlotData: return "plotdata";
  }
  return "unknown";
}

SyntheticSpec spec_from_config(const Config& config) {
  SyntheticSpec spec;
  spec.identity = config.get_string("problem.source", "synthetic") == "identity";
  spec.n = config.get_int("problem.n", spec.n);
  spec.m = config.get_int("problem.m", spec.m);
  spec.d = config.get_int("problem.d", spec.d);
  spec.conditioning = config.get_double("problem.conditioning", spec.conditioning);
  spec.alpha_true = config.get_double("problem.alpha_true", spec.alpha_true);
  spec.noise_precision =
      config.get_double("problem.noise_precision", spec.noise_precision);
  spec.correlated_noise =
      config.get_bool("problem.correlated_noise", spec.correlated_noise);
  spec.sparse = config.get_bool("problem.sparse", spec.sparse);
  spec.sparse_fill = config.get_double("problem.sparse_fill", spec.sparse_fill);
  return spec;
}

Problem load_problem(const fs::path& dir) {
  Problem problem;
  const Eigen::MatrixXd blocks = csv::read_matrix(dir / "b_blocks.csv");
  const Eigen::Index m = blocks.cols();
  require(m > 0 && blocks.rows() % m == 0, "load: malformed b_blocks.csv");
  const Eigen::Index n = blocks.rows() / m;
  std::vector<Eigen::MatrixXd> block_list;
  block_list.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    block_list.push_back(blocks.middleRows(i * m, m));
  problem.noise = NoisePrecision::from_blocks(std::move(block_list));

  if (fs::exists(dir / "phi.csv")) {
    problem.op =
        std::make_shared<DenseDesign>(csv::read_matrix(dir / "phi.csv"), m);
  } else if (fs::exists(dir / "phi_coo.csv")) {
    problem.op = std::make_shared<SparseDesign>(
        csv::read_sparse(dir / "phi_coo.csv"), m);
  } else {
    throw IoError("load: neither phi.csv nor phi_coo.csv in " + dir.string());
  }
  require(problem.op->num_data() == n,
          "load: design and noise disagree on n");

  const Dataset data = csv::read_dataset(dir / "y.csv");
  require(data.n() == n && data.m() == m, "load: y.csv shape mismatch");
  problem.y = data.stacked_targets();
  return problem;
}

Problem resolve_problem(const Config& config, std::uint64_t seed) {
  if (config.has("problem.dir"))
    return load_problem(config.get_string("problem.dir"));
  const SyntheticInstance inst = gen_synthetic(spec_from_config(config), seed);
  return Problem{inst.op, inst.noise, inst.y};
}

std::vector<std::string> emit_plotdata(
    const std::vector<fs::path>& csv_inputs, const fs::path& out_dir) {
  json manifest;
  manifest["series"] = json::array();
  std::vector<std::string> outputs;
  for (const auto& input : csv_inputs) {
    const csv::Table table = csv::read_table(input);
    require(!table.columns.empty(), "plotdata: empty header in " +
                                        input.string());
    const std::string x_name = table.columns[0];
    for (std::size_t c = 1; c < table.columns.size(); ++c) {
      const std::string name =
          input.stem().string() + "__" + table.columns[c] + ".dat";
      std::ofstream out(out_dir / name, std::ios::binary);
      if (!out) throw IoError("plotdata: cannot open " + name);
      for (const auto& row : table.rows)
        out << row[0] << " " << row[c] << "\n";
      manifest["series"].push_back({{"source", input.filename().string()},
                                    {"x", x_name},
                                    {"column", table.columns[c]},
                                    {"file", name}});
      outputs.push_back(name);
    }
  }
  std::ofstream mout(out_dir / "plot_manifest.json", std::ios::binary);
  mout << manifest.dump(2) << "\n";
  outputs.push_back("plot_manifest.json");
  return outputs;
}

RunResult run_experiment(const ExperimentConfig& exp) {
  RunResult result;
  std::error_code ec;
  fs::create_directories(exp.out_dir, ec);
  try {
    if (ec) throw IoError("cannot create output dir " + exp.out_dir.string());
    switch (exp.kind) {
      case Kind::kGenData: run_gen_data(exp, result); break;
      case Kind::kExact: run_exact(exp, result); break;
      case Kind::kSampleFidelity: run_sample_fidelity(exp, result); break;
      case Kind::kEm: run_em_kind(exp, result); break;
      case Kind::kDualDemo: run_dual_demo(exp, result); break;
      case Kind::kLinlapDemo: run_linlap_demo(exp, result); break;
      case Kind::kEval: run_eval(exp, result); break;
      case Kind::kPlotData: {
        auto outputs = emit_plotdata(exp.inputs, exp.out_dir);
        result.outputs.insert(result.outputs.end(), outputs.begin(),
                              outputs.end());
        break;
      }
    }
  } catch (const std::exception& error) {
    result.ok = false;
    result.messages.push_back(error.what());
  }

  // Manifest: inputs, seed, version, validity; no wall-clock state.
  json manifest;
  manifest["tool"] = "linsamp";
  manifest["version"] = kVersion;
  manifest["kind"] = kind_to_string(exp.kind);
  manifest["seed"] = exp.seed;
  json config_json = json::object();
  for (const auto& [key, value] : exp.options.values()) config_json[key] = value;
  manifest["config"] = config_json;
  json inputs_json = json::array();
  for (const auto& input : exp.inputs) inputs_json.push_back(input.string());
  manifest["inputs"] = inputs_json;
  manifest["outputs"] = result.outputs;
  manifest["validity"] = {{"ok", result.ok},
                          {"degraded", result.degraded},
                          {"messages", result.messages}};
  std::ofstream mout(exp.out_dir / "run.json", std::ios::binary);
  if (mout) mout << manifest.dump(2) << "\n";
  return result;
}

}  // namespace linsamp::runner
