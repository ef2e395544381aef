// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qrnn/losses.hpp"
#include "qrnn/optim.hpp"
#include "qrnn/scenarios.hpp"

namespace qrnn {

enum class Method { SqErrNet, QuantileNet, CompositeNet, GeometricNet, MarginalNet };

const char* to_string(Method m) noexcept;
Method method_from_string(const std::string& name);
/// Row order used by tables: sqerr, quantile, composite, geometric, marginal, then any
/// external method names (e.g. quantile_spline, quantile_forest) alphabetically.
int method_rank(const std::string& name) noexcept;

/// sqerr_net runs everywhere; quantile_net adapts to the response (joint composite model for
/// univariate scenarios, marginal pinball for multivariate ones); composite_net is univariate
/// only; geometric_net and marginal_net are multivariate only.
bool method_supports(Method m, const Scenario& s) noexcept;

struct NetworkConfig {
  std::vector<std::size_t> hidden{200, 200};
  double dropout = 0.1;
  bool batch_norm = true;
};

struct ExperimentPlan {
  std::vector<int> scenarios{1, 2, 3, 4, 5, 6, 7};
  std::vector<Method> methods{Method::SqErrNet, Method::QuantileNet, Method::GeometricNet};
  std::vector<std::size_t> n_grid{100, 1000};
  QuantileLevels taus = QuantileLevels::paper_grid();
  std::size_t trials = 5;
  std::size_t n_test = 2000;
  std::uint64_t base_seed = 0;
  TrainConfig train;  // train.seed is ignored; every trial derives its own
  /// Starting learning rate of sqerr_net. Squared error with lr0 = 0.1 and momentum 0.9 diverges
  /// on the 200x200 batch-normalized network.
  double sqerr_lr0 = 0.01;
  NetworkConfig network;

  void validate() const;
  /// Desk-scale default sweep: 5 trials, n in {100, 1000}, 2000 test points.
  static ExperimentPlan desk_scale();
  /// 25 trials, n in {100, 1000, 10000}, 10000 test points.
  static ExperimentPlan paper_scale();
};

/// Parses the key = value plan format. Keys: scenarios, methods, n_grid, taus, trials, n_test,
/// base_seed, epochs, batch_size, lr0, sqerr_lr0, momentum, decay_factor, decay_every, hidden,
/// dropout, batch_norm. Lists are written [a, b, c]; '#' starts a comment. Missing keys keep the
/// desk-scale defaults.
ExperimentPlan parse_plan(const std::string& text, ExperimentPlan base = ExperimentPlan::desk_scale());
ExperimentPlan load_plan(const std::filesystem::path& path, ExperimentPlan base = ExperimentPlan::desk_scale());

struct PlanCell {
  int scenario = 0;
  Method method = Method::QuantileNet;
  std::size_t n = 0;
};

/// Supported (scenario, method, n) cells in plan order; unsupported combinations are omitted.
std::vector<PlanCell> plan_cells(const ExperimentPlan& plan);

struct TrialResult {
  int scenario = 0;
  std::string method;
  std::size_t n = 0;
  double tau = 0.5;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double delta_n2 = 0.0;
  double coverage = 0.0;
  std::size_t crossings = 0;
  double runtime_ms = 0.0;

  friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

/// splitmix64(base_seed ^ hash(scenario, method, n, trial)); recorded in every TrialResult and
/// used for model initialization and minibatch order.
std::uint64_t trial_seed(std::uint64_t base_seed, int scenario, Method method, std::size_t n, std::size_t trial);
/// Seed of the training sample. Independent of the method, so all methods of one trial fit the
/// same dataset.
std::uint64_t dataset_seed(std::uint64_t base_seed, int scenario, std::size_t n, std::size_t trial);

/// Trains one network for the cell and scores it on fresh test covariates against the
/// analytic quantiles. Returns one record per evaluated level: every plan level for univariate
/// quantile methods, tau = 0.5 otherwise.
std::vector<TrialResult> run_trial(const ExperimentPlan& plan, const PlanCell& cell, std::size_t trial_idx);

/// Every supported cell x trial. Results come back in plan order regardless of `jobs`.
std::vector<TrialResult> run_plan(const ExperimentPlan& plan, std::size_t jobs = 1);

struct SummaryRow {
  int scenario = 0;
  std::size_t n = 0;
  std::string method;
  double tau = 0.5;
  std::size_t trials = 0;
  double mean_mse = 0.0;
  double se_mse = 0.0;  // sample standard deviation / sqrt(trials); 0 for one trial
  double mean_delta_n2 = 0.0;
  double mean_coverage = 0.0;
  double mean_crossings = 0.0;
};

/// Means per (scenario, n, method, tau), sorted in that order. Independent of input order.
std::vector<SummaryRow> aggregate(const std::vector<TrialResult>& results);

enum class ResultFormat { Csv, Markdown, Json };

/// scenario,method,n,tau,trial,seed,mse,delta_n2,coverage,crossings,runtime_ms with floats at
/// 6 significant digits.
std::string results_csv(const std::vector<TrialResult>& results);
std::vector<TrialResult> parse_results_csv(const std::string& text);
/// Per scenario one table: rows are (n, method), columns the quantile levels, cells the mean
/// MSE; "*" marks cells that were not evaluated.
std::string results_markdown(const std::vector<TrialResult>& results);
std::string results_json(const std::vector<TrialResult>& results);
std::string summary_csv(const std::vector<SummaryRow>& rows);

void write_results(const std::vector<TrialResult>& results, const std::filesystem::path& path, ResultFormat format);

}  // namespace qrnn
