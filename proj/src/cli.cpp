// SPDX-License-Identifier: Apache-2.0
#include "qrnn/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qrnn/error.hpp"
#include "qrnn/grad_check.hpp"
#include "qrnn/harness.hpp"
#include "qrnn/metrics.hpp"
#include "qrnn/model_io.hpp"
#include "qrnn/optim.hpp"
#include "qrnn/scenarios.hpp"

namespace qrnn {

namespace {

namespace fs = std::filesystem;

constexpr const char* kSeedEnv = "QRELU_SEED";

// Usage problems detected after CLI11 parsing (bad combinations, malformed lists).
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

const CLI::Validator kWritablePath(
    [](std::string& value) -> std::string {
      const fs::path parent = fs::path(value).parent_path();
      if (!parent.empty() && !fs::is_directory(parent)) return "Directory does not exist: " + parent.string();
      return {};
    },
    "PATH(writable)");

std::vector<double> parse_double_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": malformed number '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

QuantileLevels parse_levels(const std::string& text, const std::string& flag) {
  try {
    return QuantileLevels(parse_double_list(text, flag));
  } catch (const DomainError& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Levels at which a trained model's output columns are quantile estimates.
std::vector<double> model_levels(const std::optional<Objective>& objective) {
  if (!objective) return {0.5};
  switch (objective->kind) {
    case LossKind::Composite: return objective->taus.values();
    case LossKind::Pinball:
    case LossKind::Marginal: return {objective->tau};
    default: return {0.5};
  }
}

struct GenDataArgs {
  int scenario = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string loss = "composite";
  std::string taus;
  std::string direction;
  TrainConfig cfg;
  std::vector<std::size_t> hidden{200, 200};
  double dropout = 0.1;
  bool no_batch_norm = false;
  bool lr_given = false;
  std::string model_out;
};

struct PredictArgs {
  std::string model, data, out;
};

struct EvalArgs {
  std::string model;
  int scenario = 0;
  std::string taus;
  std::size_t n_test = 10000;
  std::uint64_t seed = 0;
  std::string out;
};

struct BenchArgs {
  std::string plan, out_dir;
  bool paper_scale = false;
  bool record_runtime = false;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
};

struct GradCheckArgs {
  std::size_t trials = 20;
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  const Dataset data = generate(a.scenario, a.n, a.seed);
  write_dataset_csv(data, a.out);
  std::cout << "wrote " << a.n << " samples of scenario " << a.scenario << " to " << a.out << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a) {
  const Dataset data = read_dataset_csv(a.data);
  if (data.y.cols() == 0) throw UsageError("--data: file has no response (y) columns");

  Objective objective;
  const LossKind kind = loss_kind_from_string(a.loss);
  switch (kind) {
    case LossKind::Composite:
      objective = Objective::composite(a.taus.empty() ? QuantileLevels::paper_grid() : parse_levels(a.taus, "--taus"));
      break;
    case LossKind::Pinball:
    case LossKind::Marginal: {
      const auto levels = a.taus.empty() ? QuantileLevels({0.5}) : parse_levels(a.taus, "--taus");
      if (levels.size() != 1) throw UsageError("--taus: " + a.loss + " loss fits a single level");
      objective = kind == LossKind::Pinball ? Objective::pinball(levels[0]) : Objective::marginal(levels[0]);
      break;
    }
    case LossKind::Geometric:
      try {
        objective = Objective::geometric(a.direction.empty() ? DirectionU::zero(data.y.cols())
                                                             : DirectionU(parse_double_list(a.direction, "--direction")));
      } catch (const DomainError& e) {
        throw UsageError(std::string("--direction: ") + e.what());
      }
      break;
    case LossKind::SquaredError:
      objective = Objective::squared_error();
      break;
  }
  try {
    objective.check_dims(objective.output_dim(data.y.cols()), data.y.cols());
  } catch (const ShapeError& e) {
    throw UsageError(e.what());
  }

  MlpModel model = init_model(mlp_layers(data.x.cols(), a.hidden, objective.output_dim(data.y.cols()), a.dropout,
                                         !a.no_batch_norm),
                              splitmix64(a.cfg.seed));
  TrainConfig cfg = a.cfg;
  if (kind == LossKind::SquaredError && !a.lr_given) cfg.lr0 = ExperimentPlan{}.sqerr_lr0;
  const TrainHistory history = train(model, data.x, data.y, objective, cfg);
  save_model(model, a.model_out, &objective);
  std::cout << "trained " << a.cfg.epochs << " epochs, final loss " << fmt(history.epoch_loss.back())
            << "; model written to " << a.model_out << '\n';
  return 0;
}

int cmd_predict(const PredictArgs& a) {
  const ModelFile file = load_model(a.model);
  const Dataset data = read_dataset_csv(a.data);
  const Matrix pred = decode_output(file.model.predict(data.x), file.objective);

  std::string header;
  const bool quantile_columns = file.objective && file.objective->kind == LossKind::Composite;
  for (std::size_t j = 0; j < pred.cols(); ++j) {
    if (j) header += ',';
    header += quantile_columns ? "q" + fmt(file.objective->taus[j]) : "f" + std::to_string(j + 1);
  }
  std::string text = header + '\n';
  char buf[64];
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    for (std::size_t j = 0; j < pred.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", pred(i, j));
      if (j) text += ',';
      text += buf;
    }
    text += '\n';
  }
  write_text(a.out, text);
  std::cout << "wrote " << pred.rows() << " predictions to " << a.out << '\n';
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const ModelFile file = load_model(a.model);
  const Scenario& s = scenario(a.scenario);
  if (file.model.input_dim() != s.input_dim)
    throw UsageError("--scenario: model takes " + std::to_string(file.model.input_dim()) + " inputs, scenario " +
                     std::to_string(a.scenario) + " has " + std::to_string(s.input_dim));

  const std::vector<double> available = model_levels(file.objective);
  std::vector<double> wanted = a.taus.empty() ? available : parse_levels(a.taus, "--taus").values();

  const Dataset test = generate(a.scenario, a.n_test, a.seed);
  const Matrix pred = decode_output(file.model.predict(test.x), file.objective);
  const std::size_t crossings = pred.cols() > 1 && file.objective && file.objective->kind == LossKind::Composite
                                    ? crossing_count(pred)
                                    : 0;

  std::string text = "tau,mse,delta_n2,coverage,crossings,n_test\n";
  for (double tau : wanted) {
    std::size_t col = available.size();
    for (std::size_t k = 0; k < available.size(); ++k)
      if (available[k] == tau) col = k;
    if (col == available.size()) throw UsageError("--taus: the model does not estimate level " + fmt(tau));
    Matrix est = pred;
    if (file.objective && file.objective->kind == LossKind::Composite) {
      est = Matrix(pred.rows(), 1);
      for (std::size_t i = 0; i < pred.rows(); ++i) est(i, 0) = pred(i, col);
    }
    const Matrix truth = true_quantile_matrix(a.scenario, test.x, tau);
    if (!est.same_shape(truth)) throw UsageError("--scenario: model output width does not match the scenario");
    text += fmt(tau) + ',' + fmt(quantile_mse(est, truth)) + ',' + fmt(delta_n2(est, truth)) + ',' +
            fmt(coverage(test.y, est)) + ',' + std::to_string(crossings) + ',' + std::to_string(a.n_test) + '\n';
  }
  write_text(a.out, text);
  std::cout << text;
  return 0;
}

int cmd_bench(const BenchArgs& a) {
  ExperimentPlan plan = load_plan(a.plan);
  if (a.paper_scale) {
    const ExperimentPlan paper = ExperimentPlan::paper_scale();
    plan.trials = paper.trials;
    plan.n_grid = paper.n_grid;
    plan.n_test = paper.n_test;
  }
  if (a.seed) plan.base_seed = *a.seed;
  plan.validate();
  fs::create_directories(a.out_dir);

  std::vector<TrialResult> results = run_plan(plan, a.jobs);
  if (!a.record_runtime)
    for (auto& r : results) r.runtime_ms = 0.0;

  const fs::path dir(a.out_dir);
  write_results(results, dir / "results.csv", ResultFormat::Csv);
  write_results(results, dir / "results.md", ResultFormat::Markdown);
  write_results(results, dir / "results.json", ResultFormat::Json);
  write_text(dir / "summary.csv", summary_csv(aggregate(results)));
  std::cout << results_markdown(results);
  std::cout << "wrote " << results.size() << " trial records to " << dir.string() << '\n';
  return 0;
}

int cmd_grad_check(const GradCheckArgs& a) {
  const auto cases = random_grad_checks(a.trials, a.seed);
  double worst = 0.0;
  for (const auto& c : cases) {
    std::cout << fmt(c.max_rel_error) << "  " << c.description << '\n';
    worst = std::max(worst, c.max_rel_error);
  }
  const bool ok = worst < 1e-4;
  std::cout << "max relative error " << fmt(worst) << (ok ? " (ok)" : " (FAILED, threshold 1e-4)") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Quantile regression with ReLU networks: data generation, training, evaluation and benchmarks"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Sample a synthetic scenario and write it as CSV");
  gen_cmd->add_option("--scenario", gen.scenario, "Scenario id")->required()->check(CLI::Range(1, 7));
  gen_cmd->add_option("--n", gen.n, "Number of samples")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->envname(kSeedEnv);
  gen_cmd->add_option("--out", gen.out, "Output CSV path")->required()->check(kWritablePath);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Fit a network to a dataset CSV");
  train_cmd->add_option("--data", tr.data, "Training data CSV (x1..xd,y1..yp)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--loss", tr.loss, "Objective")
      ->check(CLI::IsMember({"pinball", "composite", "sqerr", "geometric", "marginal"}))
      ->capture_default_str();
  train_cmd->add_option("--taus", tr.taus,
                        "Comma-separated quantile levels (composite default 0.05,0.25,0.5,0.75,0.95; "
                        "pinball/marginal take one level, default 0.5)");
  train_cmd->add_option("--direction", tr.direction, "Geometric quantile direction u, comma-separated (default 0)");
  train_cmd->add_option("--epochs", tr.cfg.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.cfg.batch_size, "Minibatch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* lr_opt = train_cmd->add_option("--lr", tr.cfg.lr0, "Initial learning rate (sqerr default 0.01)")
                     ->check(CLI::PositiveNumber)
                     ->capture_default_str();
  train_cmd->add_option("--momentum", tr.cfg.momentum, "Nesterov momentum")
      ->check(CLI::Range(0.0, 0.999999))
      ->capture_default_str();
  train_cmd->add_option("--decay-factor", tr.cfg.decay_factor, "Step decay factor")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();
  train_cmd->add_option("--decay-every", tr.cfg.decay_every, "Epochs between learning-rate decays")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--hidden", tr.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
  train_cmd->add_option("--dropout", tr.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
  train_cmd->add_flag("--no-batch-norm", tr.no_batch_norm, "Disable batch normalization");
  train_cmd->add_option("--seed", tr.cfg.seed, "Random seed (initialization and minibatch order)")->envname(kSeedEnv);
  train_cmd->add_option("--model-out", tr.model_out, "Output model JSON path")->required()->check(kWritablePath);

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Apply a saved model to the x columns of a CSV");
  predict_cmd->add_option("--model", pr.model, "Model JSON")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--data", pr.data, "Input CSV")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pr.out, "Output CSV path")->required()->check(kWritablePath);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a saved model against the analytic quantiles of a scenario");
  eval_cmd->add_option("--model", ev.model, "Model JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--scenario", ev.scenario, "Scenario id")->required()->check(CLI::Range(1, 7));
  eval_cmd->add_option("--taus", ev.taus, "Levels to score (default: every level the model estimates)");
  eval_cmd->add_option("--n-test", ev.n_test, "Fresh test points")->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "Seed of the test sample")->envname(kSeedEnv);
  eval_cmd->add_option("--out", ev.out, "Output CSV path")->required()->check(kWritablePath);

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Run an experiment plan and write result tables");
  bench_cmd->add_option("--plan", be.plan, "Plan file (key = value)")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out-dir", be.out_dir, "Output directory")->required();
  bench_cmd->add_flag("--paper-scale", be.paper_scale, "25 trials, n in {100,1000,10000}, 10000 test points");
  bench_cmd->add_option("--jobs", be.jobs, "Trials run concurrently")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_flag("--record-runtime", be.record_runtime,
                      "Fill the runtime_ms column (otherwise 0, keeping outputs byte-reproducible)");
  bench_cmd->add_option("--seed", be.seed, "Base seed (overrides base_seed in the plan)")->envname(kSeedEnv);

  GradCheckArgs gc;
  auto* grad_cmd = app.add_subcommand("grad-check", "Compare backpropagation with finite differences");
  grad_cmd->add_option("--trials", gc.trials, "Random configurations")->check(CLI::PositiveNumber)->capture_default_str();
  grad_cmd->add_option("--seed", gc.seed, "Random seed")->envname(kSeedEnv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    std::cerr << "run with --help for usage\n";
    return 2;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (train_cmd->parsed()) {
      tr.lr_given = lr_opt->count() > 0;
      return cmd_train(tr);
    }
    if (predict_cmd->parsed()) return cmd_predict(pr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (bench_cmd->parsed()) return cmd_bench(be);
    if (grad_cmd->parsed()) return cmd_grad_check(gc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace qrnn
