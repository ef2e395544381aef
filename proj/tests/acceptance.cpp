// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "qrnn/distributions.hpp"
#include "qrnn/grad_check.hpp"
#include "qrnn/harness.hpp"
#include "qrnn/losses.hpp"
#include "qrnn/metrics.hpp"
#include "qrnn/model_io.hpp"
#include "qrnn/optim.hpp"
#include "qrnn/scenarios.hpp"

using namespace qrnn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double mean_mse(const std::vector<TrialResult>& rs, int scenario, const std::string& method, double tau) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : rs)
    if (r.scenario == scenario && r.method == method && r.tau == tau) {
      sum += r.mse;
      ++count;
    }
  return count ? sum / static_cast<double>(count) : std::nan("");
}

ExperimentPlan table_plan(std::vector<int> scenarios, std::vector<Method> methods) {
  ExperimentPlan p = ExperimentPlan::desk_scale();
  p.scenarios = std::move(scenarios);
  p.methods = std::move(methods);
  p.n_grid = {1000};
  p.trials = 5;
  return p;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto cases = random_grad_checks(20, 2024);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, c.max_rel_error);
  return {cases.size() == 20 && worst < 1e-4 && secs < 30.0,
          "20 configurations, max relative error " + num(worst) + ", " + num(secs, 3) + " s"};
}

Outcome non_crossing() {
  std::size_t total = 0, models = 0;
  for (int id = 1; id <= 5; ++id) {
    const Scenario& s = scenario(id);
    const Dataset train_set = generate(id, 300, 100 + id);
    const Objective obj = Objective::composite(QuantileLevels::paper_grid());
    MlpModel model = init_model(mlp_layers(s.input_dim, {200, 200}, obj.output_dim(1), 0.1, true), 7 + id);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = static_cast<std::uint64_t>(id);
    train(model, train_set.x, train_set.y, obj, cfg);
    ++models;

    // Scenario covariates plus points far outside the training range.
    const Dataset test = generate(id, 10000, 500 + id);
    total += crossing_count(decode_output(model.predict(test.x), obj));
    Rng rng(900 + id);
    std::uniform_real_distribution<double> wide(-1e3, 1e3);
    Matrix far(10000, s.input_dim);
    for (double& v : far.values()) v = wide(rng);
    total += crossing_count(decode_output(model.predict(far), obj));
  }
  return {total == 0, std::to_string(models) + " trained composite models, 2 x 10^4 points each, " +
                          std::to_string(total) + " crossings"};
}

Outcome constant_model_recovery() {
  Rng rng(31);
  const std::size_t n = 500;
  Matrix x(n, 1, 1.0), y(n, 1);
  for (double& v : y.values()) v = sample_laplace(rng, 2.0);
  std::vector<double> sorted(y.values().begin(), y.values().end());
  std::sort(sorted.begin(), sorted.end());

  bool ok = true;
  std::string detail;
  for (double tau : {0.25, 0.5, 0.75}) {
    // Order-statistic oracle.
    const double order_stat = sorted[static_cast<std::size_t>(std::ceil(tau * n)) - 1];
    // Grid-search oracle over the empirical risk.
    double best_c = 0.0, best_risk = 1e300;
    for (double c = sorted.front(); c <= sorted.back(); c += 1e-3) {
      double risk = 0.0;
      for (double v : sorted) risk += pinball(tau, v - c);
      if (risk < best_risk) {
        best_risk = risk;
        best_c = c;
      }
    }
    MlpModel model({LayerSpec::linear(1, 1)});
    model.freeze(0);
    TrainConfig cfg;
    cfg.seed = 3;
    train(model, x, y, Objective::pinball(tau), cfg);
    const double fitted = model.layers()[0].bias(0, 0);
    const bool hit = std::abs(fitted - order_stat) <= 0.05 && std::abs(best_c - order_stat) <= 0.05;
    ok = ok && hit;
    detail += "tau=" + num(tau, 2) + ": fit " + num(fitted) + " order statistic " + num(order_stat) + " grid " +
              num(best_c) + "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome noise_quantile_oracles() {
  double worst = 0.0;
  for (double tau = 0.05; tau < 0.951; tau += 0.05)
    worst = std::max(worst, std::abs(student_t2_quantile(tau) - student_t_quantile_bisect(2.0, tau)));
  const double lap = std::abs(laplace_quantile(2.0, 0.75) - 2.0 * std::log(2.0));
  return {worst < 1e-9 && lap < 1e-12,
          "t(2) closed form vs bisection max gap " + num(worst) + ", laplace Q(0.75) error " + num(lap)};
}

Outcome table1_reproduction() {
  const auto t0 = Clock::now();
  const auto s2 = run_plan(table_plan({2}, {Method::QuantileNet}));
  const double secs = seconds_since(t0);
  const auto s1 = run_plan(table_plan({1}, {Method::QuantileNet}));
  const double m2 = mean_mse(s2, 2, "quantile_net", 0.5);
  const double m1 = mean_mse(s1, 1, "quantile_net", 0.5);
  return {m2 <= 0.5 && secs < 300.0 && m1 <= 0.15, "scenario 2 mean MSE " + num(m2) + " (gate 0.5, " +
                                                         num(secs, 3) + " s), scenario 1 mean MSE " + num(m1) +
                                                         " (gate 0.15)"};
}

Outcome heavy_tail_ordering() {
  const auto rs = run_plan(table_plan({5}, {Method::SqErrNet, Method::QuantileNet}));
  const double q = mean_mse(rs, 5, "quantile_net", 0.5);
  const double sq = mean_mse(rs, 5, "sqerr_net", 0.5);
  return {q < sq, "scenario 5 quantile_net " + num(q) + " vs sqerr_net " + num(sq)};
}

Outcome multivariate_losses() {
  const auto rs = run_plan(table_plan({6}, {Method::SqErrNet, Method::MarginalNet, Method::GeometricNet}));
  const double sq = mean_mse(rs, 6, "sqerr_net", 0.5);
  const double mg = mean_mse(rs, 6, "marginal_net", 0.5);
  const double ge = mean_mse(rs, 6, "geometric_net", 0.5);
  return {mg <= 0.5 * sq && ge <= 0.5 * sq, "scenario 6 marginal_net " + num(mg) + " (ratio " + num(mg / sq, 3) +
                                                "), geometric_net " + num(ge) + " (ratio " + num(ge / sq, 3) +
                                                "), sqerr_net " + num(sq) + "; gate ratio 0.5"};
}

Outcome coverage_calibration() {
  ExperimentPlan p = ExperimentPlan::desk_scale();
  p.taus = QuantileLevels({0.25, 0.5, 0.75});
  p.n_test = 100000;
  const auto rs = run_trial(p, {2, Method::QuantileNet, 10000}, 0);
  bool ok = true;
  std::string detail;
  for (const auto& r : rs) {
    if (r.tau == 0.5) continue;
    ok = ok && std::abs(r.coverage - r.tau) <= 0.05;
    detail += "tau=" + num(r.tau, 2) + " coverage " + num(r.coverage) + "; ";
  }
  detail += "n=10000, 10^5 test points";
  return {ok, detail};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QRNN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome full_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("qrnn_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream plan(dir / "plan.toml");
    plan << "scenarios = [1, 2, 6, 7]\n"
            "methods = [sqerr_net, quantile_net, geometric_net, marginal_net]\n"
            "n_grid = [100]\n"
            "trials = 2\n"
            "n_test = 500\n"
            "epochs = 10\n"
            "base_seed = 17\n";
  }
  const std::string plan = (dir / "plan.toml").string();
  const std::vector<std::pair<std::string, std::string>> runs{
      {"serial_a", ""}, {"serial_b", ""}, {"jobs4", " --jobs 4"}};
  bool ok = true;
  for (const auto& [name, extra] : runs)
    ok = ok && run_cli("bench --plan " + plan + " --out-dir " + (dir / name).string() + extra) == 0;
  std::size_t files = 0;
  if (ok) {
    for (const char* f : {"results.csv", "summary.csv"}) {
      const std::string ref = slurp(dir / "serial_a" / f);
      ok = ok && !ref.empty() && ref == slurp(dir / "serial_b" / f) && ref == slurp(dir / "jobs4" / f);
      ++files;
    }
  }
  fs::remove_all(dir);
  return {ok, "bench x2 serial and --jobs 4, " + std::to_string(files) + " CSV files compared byte for byte"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"non-crossing quantiles", non_crossing},
      {"constant-model quantile recovery", constant_model_recovery},
      {"noise quantile oracles", noise_quantile_oracles},
      {"univariate MSE gates", table1_reproduction},
      {"heavy-tail robustness ordering", heavy_tail_ordering},
      {"multivariate losses vs squared error", multivariate_losses},
      {"coverage calibration", coverage_calibration},
      {"full determinism", full_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
