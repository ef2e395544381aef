// SPDX-License-Identifier: Apache-2.0
#include "qrnn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "qrnn/error.hpp"
#include "qrnn/metrics.hpp"
#include "qrnn/model_io.hpp"
#include "qrnn/nn.hpp"
#include "qrnn/rng.hpp"

namespace qrnn {

namespace {

constexpr Method kMethods[] = {Method::SqErrNet, Method::QuantileNet, Method::CompositeNet, Method::GeometricNet,
                               Method::MarginalNet};

// Domain-separation tags for the seeds derived inside one trial.
constexpr std::uint64_t kTagDataset = 0xda7a;
constexpr std::uint64_t kTagTest = 0x7e57;
constexpr std::uint64_t kTagInit = 0x1417;
constexpr std::uint64_t kTagTrain = 0x7a14;

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Objective objective_for(Method m, const Scenario& s, const QuantileLevels& taus) {
  switch (m) {
    case Method::SqErrNet: return Objective::squared_error();
    case Method::QuantileNet:
      return s.multivariate() ? Objective::marginal(0.5) : Objective::composite(taus);
    case Method::CompositeNet: return Objective::composite(taus);
    case Method::GeometricNet: return Objective::geometric(DirectionU::zero(s.output_dim));
    case Method::MarginalNet: return Objective::marginal(0.5);
  }
  throw std::logic_error("objective_for: unknown method");
}

Matrix column_slice(const Matrix& m, std::size_t col) {
  Matrix out(m.rows(), 1);
  for (std::size_t i = 0; i < m.rows(); ++i) out(i, 0) = m(i, col);
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> list_items(const std::string& raw, const std::string& where) {
  std::string v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ParseError(where, "unterminated list");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.size() >= 2 && (item.front() == '"' || item.front() == '\'') && item.back() == item.front())
      item = item.substr(1, item.size() - 2);
    if (item.empty()) throw ParseError(where, "empty list item");
    out.push_back(item);
  }
  if (out.empty()) throw ParseError(where, "empty value");
  return out;
}

template <class T>
T parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    T v;
    if constexpr (std::is_floating_point_v<T>) {
      v = static_cast<T>(std::stod(s, &pos));
    } else if constexpr (std::is_signed_v<T>) {
      v = static_cast<T>(std::stoll(s, &pos));
    } else {
      if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
      v = static_cast<T>(std::stoull(s, &pos));
    }
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(where, "malformed number '" + s + "'");
  }
}

template <class T>
std::vector<T> parse_numbers(const std::string& raw, const std::string& where) {
  std::vector<T> out;
  for (const auto& item : list_items(raw, where)) out.push_back(parse_number<T>(item, where));
  return out;
}

template <class T>
T parse_scalar(const std::string& raw, const std::string& where) {
  const auto items = list_items(raw, where);
  if (items.size() != 1) throw ParseError(where, "expected a single value");
  return parse_number<T>(items[0], where);
}

struct CellKey {
  int scenario;
  std::size_t n;
  int rank;
  std::string method;
  double tau;

  auto tie() const { return std::tie(scenario, n, rank, method, tau); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
};

}  // namespace

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::SqErrNet: return "sqerr_net";
    case Method::QuantileNet: return "quantile_net";
    case Method::CompositeNet: return "composite_net";
    case Method::GeometricNet: return "geometric_net";
    case Method::MarginalNet: return "marginal_net";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  for (Method m : kMethods)
    if (name == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + name + "'");
}

int method_rank(const std::string& name) noexcept {
  for (std::size_t i = 0; i < std::size(kMethods); ++i)
    if (name == to_string(kMethods[i])) return static_cast<int>(i);
  return static_cast<int>(std::size(kMethods));
}

bool method_supports(Method m, const Scenario& s) noexcept {
  switch (m) {
    case Method::SqErrNet:
    case Method::QuantileNet: return true;
    case Method::CompositeNet: return !s.multivariate();
    case Method::GeometricNet:
    case Method::MarginalNet: return s.multivariate();
  }
  return false;
}

void ExperimentPlan::validate() const {
  if (scenarios.empty()) throw DomainError("plan: no scenarios");
  for (int id : scenarios) (void)scenario(id);
  if (methods.empty()) throw DomainError("plan: no methods");
  if (n_grid.empty()) throw DomainError("plan: empty n_grid");
  for (std::size_t n : n_grid)
    if (n < 2) throw DomainError("plan: training sizes must be at least 2");
  if (taus.empty()) throw DomainError("plan: no quantile levels");
  if (trials == 0) throw DomainError("plan: trials must be at least 1");
  if (n_test == 0) throw DomainError("plan: n_test must be at least 1");
  train.validate();
  if (!(sqerr_lr0 > 0.0) || !std::isfinite(sqerr_lr0)) throw DomainError("plan: sqerr_lr0 must be positive");
  if (!(network.dropout >= 0.0 && network.dropout < 1.0)) throw DomainError("plan: dropout must lie in [0,1)");
}

ExperimentPlan ExperimentPlan::desk_scale() { return ExperimentPlan{}; }

ExperimentPlan ExperimentPlan::paper_scale() {
  ExperimentPlan p;
  p.trials = 25;
  p.n_grid = {100, 1000, 10000};
  p.n_test = 10000;
  return p;
}

ExperimentPlan parse_plan(const std::string& text, ExperimentPlan plan) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // blank, comment, or [section] header
    const auto eq = line.find('=');
    const std::string where = "plan line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ParseError(where, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string at = where + " (" + key + ")";
    if (!seen.insert(key).second) throw ParseError(at, "duplicate key");

    if (key == "scenarios") {
      plan.scenarios = parse_numbers<int>(value, at);
    } else if (key == "methods") {
      plan.methods.clear();
      for (const auto& name : list_items(value, at)) {
        try {
          plan.methods.push_back(method_from_string(name));
        } catch (const std::invalid_argument& e) {
          throw ParseError(at, e.what());
        }
      }
    } else if (key == "n_grid") {
      plan.n_grid = parse_numbers<std::size_t>(value, at);
    } else if (key == "taus") {
      try {
        plan.taus = QuantileLevels(parse_numbers<double>(value, at));
      } catch (const DomainError& e) {
        throw ParseError(at, e.what());
      }
    } else if (key == "trials") {
      plan.trials = parse_scalar<std::size_t>(value, at);
    } else if (key == "n_test") {
      plan.n_test = parse_scalar<std::size_t>(value, at);
    } else if (key == "base_seed") {
      plan.base_seed = parse_scalar<std::uint64_t>(value, at);
    } else if (key == "epochs") {
      plan.train.epochs = parse_scalar<std::size_t>(value, at);
    } else if (key == "batch_size") {
      plan.train.batch_size = parse_scalar<std::size_t>(value, at);
    } else if (key == "lr0") {
      plan.train.lr0 = parse_scalar<double>(value, at);
    } else if (key == "sqerr_lr0") {
      plan.sqerr_lr0 = parse_scalar<double>(value, at);
    } else if (key == "momentum") {
      plan.train.momentum = parse_scalar<double>(value, at);
    } else if (key == "decay_factor") {
      plan.train.decay_factor = parse_scalar<double>(value, at);
    } else if (key == "decay_every") {
      plan.train.decay_every = parse_scalar<std::size_t>(value, at);
    } else if (key == "hidden") {
      plan.network.hidden = parse_numbers<std::size_t>(value, at);
    } else if (key == "dropout") {
      plan.network.dropout = parse_scalar<double>(value, at);
    } else if (key == "batch_norm") {
      const auto v = list_items(value, at);
      if (v.size() != 1 || (v[0] != "true" && v[0] != "false")) throw ParseError(at, "expected true or false");
      plan.network.batch_norm = v[0] == "true";
    } else {
      throw ParseError(at, "unknown key");
    }
  }
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError("plan", e.what());
  }
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path, ExperimentPlan base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open plan file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str(), std::move(base));
}

std::vector<PlanCell> plan_cells(const ExperimentPlan& plan) {
  std::vector<PlanCell> cells;
  for (int id : plan.scenarios)
    for (std::size_t n : plan.n_grid)
      for (Method m : plan.methods)
        if (method_supports(m, scenario(id))) cells.push_back({id, m, n});
  return cells;
}

std::uint64_t trial_seed(std::uint64_t base_seed, int scenario, Method method, std::size_t n, std::size_t trial) {
  return splitmix64(base_seed ^ hash_keys(static_cast<std::uint64_t>(scenario), fnv1a(to_string(method)), n, trial));
}

std::uint64_t dataset_seed(std::uint64_t base_seed, int scenario, std::size_t n, std::size_t trial) {
  return splitmix64(base_seed ^ hash_keys(kTagDataset, static_cast<std::uint64_t>(scenario), n, trial));
}

std::vector<TrialResult> run_trial(const ExperimentPlan& plan, const PlanCell& cell, std::size_t trial_idx) {
  const Scenario& s = scenario(cell.scenario);
  if (!method_supports(cell.method, s))
    throw UnsupportedError(std::string(to_string(cell.method)) + " does not apply to scenario " +
                           std::to_string(cell.scenario));
  const auto start = std::chrono::steady_clock::now();

  const std::uint64_t seed = trial_seed(plan.base_seed, cell.scenario, cell.method, cell.n, trial_idx);
  const std::uint64_t data_seed = dataset_seed(plan.base_seed, cell.scenario, cell.n, trial_idx);
  const Dataset train_set = generate(cell.scenario, cell.n, data_seed);
  const Dataset test_set = generate(cell.scenario, plan.n_test, splitmix64(data_seed ^ kTagTest));

  const Objective objective = objective_for(cell.method, s, plan.taus);
  MlpModel model = init_model(mlp_layers(s.input_dim, plan.network.hidden, objective.output_dim(s.output_dim),
                                         plan.network.dropout, plan.network.batch_norm),
                              splitmix64(seed ^ kTagInit));
  TrainConfig cfg = plan.train;
  cfg.seed = splitmix64(seed ^ kTagTrain);
  if (cell.method == Method::SqErrNet) cfg.lr0 = plan.sqerr_lr0;
  train(model, train_set.x, train_set.y, objective, cfg);

  const Matrix pred = decode_output(model.predict(test_set.x), objective);
  const bool per_level = objective.kind == LossKind::Composite;
  const std::size_t crossings = per_level ? crossing_count(pred) : 0;
  std::vector<double> levels = per_level ? plan.taus.values() : std::vector<double>{0.5};

  std::vector<TrialResult> out;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double tau = levels[k];
    const Matrix truth = true_quantile_matrix(cell.scenario, test_set.x, tau);
    const Matrix est = per_level ? column_slice(pred, k) : pred;
    TrialResult r;
    r.scenario = cell.scenario;
    r.method = to_string(cell.method);
    r.n = cell.n;
    r.tau = tau;
    r.trial = trial_idx;
    r.seed = seed;
    r.mse = quantile_mse(est, truth);
    r.delta_n2 = delta_n2(est, truth);
    r.coverage = coverage(test_set.y, est);
    r.crossings = crossings;
    out.push_back(std::move(r));
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  for (auto& r : out) r.runtime_ms = ms;
  return out;
}

std::vector<TrialResult> run_plan(const ExperimentPlan& plan, std::size_t jobs) {
  plan.validate();
  struct Job {
    PlanCell cell;
    std::size_t trial;
  };
  std::vector<Job> queue;
  for (const PlanCell& cell : plan_cells(plan))
    for (std::size_t t = 0; t < plan.trials; ++t) queue.push_back({cell, t});

  std::vector<std::vector<TrialResult>> slots(queue.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < queue.size(); i = next++) {
      try {
        slots[i] = run_trial(plan, queue[i].cell, queue[i].trial);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = queue.size();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, queue.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<TrialResult> out;
  for (auto& slot : slots)
    for (auto& r : slot) out.push_back(std::move(r));
  return out;
}

std::vector<SummaryRow> aggregate(const std::vector<TrialResult>& results) {
  std::map<CellKey, std::vector<const TrialResult*>> groups;
  for (const auto& r : results) groups[{r.scenario, r.n, method_rank(r.method), r.method, r.tau}].push_back(&r);

  std::vector<SummaryRow> rows;
  for (auto& [key, members] : groups) {
    // Sum in trial order so the means do not depend on the order results arrive in.
    std::sort(members.begin(), members.end(), [](const TrialResult* a, const TrialResult* b) {
      return std::tie(a->trial, a->seed) < std::tie(b->trial, b->seed);
    });
    SummaryRow row;
    row.scenario = key.scenario;
    row.n = key.n;
    row.method = key.method;
    row.tau = key.tau;
    row.trials = members.size();
    const double k = static_cast<double>(members.size());
    for (const auto* r : members) {
      row.mean_mse += r->mse;
      row.mean_delta_n2 += r->delta_n2;
      row.mean_coverage += r->coverage;
      row.mean_crossings += static_cast<double>(r->crossings);
    }
    row.mean_mse /= k;
    row.mean_delta_n2 /= k;
    row.mean_coverage /= k;
    row.mean_crossings /= k;
    if (members.size() > 1) {
      double ss = 0.0;
      for (const auto* r : members) ss += (r->mse - row.mean_mse) * (r->mse - row.mean_mse);
      row.se_mse = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string results_csv(const std::vector<TrialResult>& results) {
  std::string out = "scenario,method,n,tau,trial,seed,mse,delta_n2,coverage,crossings,runtime_ms\n";
  for (const auto& r : results) {
    out += std::to_string(r.scenario) + ',' + r.method + ',' + std::to_string(r.n) + ',' + fmt6(r.tau) + ',' +
           std::to_string(r.trial) + ',' + std::to_string(r.seed) + ',' + fmt6(r.mse) + ',' + fmt6(r.delta_n2) + ',' +
           fmt6(r.coverage) + ',' + std::to_string(r.crossings) + ',' + fmt6(r.runtime_ms) + '\n';
  }
  return out;
}

std::vector<TrialResult> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<TrialResult> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line.rfind("scenario,method,", 0) != 0) throw ParseError("results line 1", "unexpected header");
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    const std::string where = "results line " + std::to_string(line_no);
    if (f.size() != 11) throw ParseError(where, "expected 11 fields");
    TrialResult r;
    r.scenario = parse_number<int>(f[0], where + " scenario");
    r.method = f[1];
    r.n = parse_number<std::size_t>(f[2], where + " n");
    r.tau = parse_number<double>(f[3], where + " tau");
    r.trial = parse_number<std::size_t>(f[4], where + " trial");
    r.seed = parse_number<std::uint64_t>(f[5], where + " seed");
    r.mse = parse_number<double>(f[6], where + " mse");
    r.delta_n2 = parse_number<double>(f[7], where + " delta_n2");
    r.coverage = parse_number<double>(f[8], where + " coverage");
    r.crossings = parse_number<std::size_t>(f[9], where + " crossings");
    r.runtime_ms = parse_number<double>(f[10], where + " runtime_ms");
    out.push_back(std::move(r));
  }
  return out;
}

std::string results_markdown(const std::vector<TrialResult>& results) {
  const auto rows = aggregate(results);
  std::string out;
  std::set<int> scenarios;
  for (const auto& r : rows) scenarios.insert(r.scenario);
  for (int id : scenarios) {
    std::set<double> taus;
    // (n, rank, method) -> tau -> mean mse
    std::map<std::tuple<std::size_t, int, std::string>, std::map<double, double>> grid;
    for (const auto& r : rows) {
      if (r.scenario != id) continue;
      taus.insert(r.tau);
      grid[{r.n, method_rank(r.method), r.method}][r.tau] = r.mean_mse;
    }
    out += "### Scenario " + std::to_string(id) + "\n\n| n | Method |";
    for (double t : taus) out += " tau=" + fmt6(t) + " |";
    out += "\n|---|---|";
    for (std::size_t k = 0; k < taus.size(); ++k) out += "---|";
    out += '\n';
    for (const auto& [key, cells] : grid) {
      out += "| " + std::to_string(std::get<0>(key)) + " | " + std::get<2>(key) + " |";
      for (double t : taus) {
        auto it = cells.find(t);
        out += ' ' + (it == cells.end() ? std::string("*") : fmt6(it->second)) + " |";
      }
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

std::string results_json(const std::vector<TrialResult>& results) {
  nlohmann::ordered_json doc;
  doc["results"] = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    doc["results"].push_back({{"scenario", r.scenario},
                              {"method", r.method},
                              {"n", r.n},
                              {"tau", r.tau},
                              {"trial", r.trial},
                              {"seed", r.seed},
                              {"mse", r.mse},
                              {"delta_n2", r.delta_n2},
                              {"coverage", r.coverage},
                              {"crossings", r.crossings},
                              {"runtime_ms", r.runtime_ms}});
  }
  doc["summary"] = nlohmann::ordered_json::array();
  for (const auto& s : aggregate(results)) {
    doc["summary"].push_back({{"scenario", s.scenario},
                              {"n", s.n},
                              {"method", s.method},
                              {"tau", s.tau},
                              {"trials", s.trials},
                              {"mean_mse", s.mean_mse},
                              {"se_mse", s.se_mse},
                              {"mean_delta_n2", s.mean_delta_n2},
                              {"mean_coverage", s.mean_coverage},
                              {"mean_crossings", s.mean_crossings}});
  }
  return doc.dump(2) + '\n';
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "scenario,n,method,tau,trials,mean_mse,se_mse,mean_delta_n2,mean_coverage,mean_crossings\n";
  for (const auto& r : rows) {
    out += std::to_string(r.scenario) + ',' + std::to_string(r.n) + ',' + r.method + ',' + fmt6(r.tau) + ',' +
           std::to_string(r.trials) + ',' + fmt6(r.mean_mse) + ',' + fmt6(r.se_mse) + ',' + fmt6(r.mean_delta_n2) +
           ',' + fmt6(r.mean_coverage) + ',' + fmt6(r.mean_crossings) + '\n';
  }
  return out;
}

void write_results(const std::vector<TrialResult>& results, const std::filesystem::path& path, ResultFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  switch (format) {
    case ResultFormat::Csv: out << results_csv(results); break;
    case ResultFormat::Markdown: out << results_markdown(results); break;
    case ResultFormat::Json: out << results_json(results); break;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace qrnn
