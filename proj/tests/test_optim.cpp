// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "qrnn/error.hpp"
#include "qrnn/optim.hpp"

using namespace qrnn;

namespace {

double full_loss(const MlpModel& m, const Matrix& x, const Matrix& y, const Objective& obj) {
  return obj.evaluate(y, m.predict(x)).loss;
}

// Bias-only regression: a Linear(1,1) whose weight is frozen at zero.
MlpModel constant_model() {
  MlpModel m({LayerSpec::linear(1, 1)});
  m.freeze(0);
  return m;
}

}  // namespace

TEST_CASE("nesterov_step examples") {
  Matrix theta = Matrix::from_rows({{1.0}});
  Matrix v(1, 1);
  nesterov_step(theta, v, Matrix::from_rows({{2.0}}), 0.1, 0.9);
  CHECK(v(0, 0) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(theta(0, 0) == doctest::Approx(0.62).epsilon(1e-15));

  // Zero gradient: pure momentum coast.
  Matrix t2 = Matrix::from_rows({{0.5}});
  Matrix v2 = Matrix::from_rows({{0.4}});
  nesterov_step(t2, v2, Matrix(1, 1), 0.1, 0.9);
  CHECK(v2(0, 0) == doctest::Approx(0.36).epsilon(1e-15));
  CHECK(t2(0, 0) == doctest::Approx(0.5 + 0.9 * 0.36).epsilon(1e-15));

  // mu = 0: plain SGD.
  Matrix t3 = Matrix::from_rows({{1.0, -1.0}});
  Matrix v3(1, 2);
  nesterov_step(t3, v3, Matrix::from_rows({{3.0, -2.0}}), 0.01, 0.0);
  CHECK(t3(0, 0) == doctest::Approx(0.97).epsilon(1e-15));
  CHECK(t3(0, 1) == doctest::Approx(-0.98).epsilon(1e-15));

  CHECK_THROWS_AS(nesterov_step(t3, v, Matrix(1, 2), 0.1, 0.9), ShapeError);
}

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  CHECK(cfg.epochs == 200);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.decay_every == 50);
  CHECK(cfg.learning_rate(0) == 0.1);
  CHECK(cfg.learning_rate(49) == 0.1);
  CHECK(cfg.learning_rate(50) == 0.05);
  CHECK(cfg.learning_rate(149) == 0.025);
  CHECK(cfg.learning_rate(199) == 0.0125);
  for (std::size_t e = 0; e + cfg.decay_every < 400; e += cfg.decay_every)
    CHECK(cfg.learning_rate(e + cfg.decay_every) == cfg.learning_rate(e) / 2.0);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.lr0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.decay_factor = 1.5;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = {};
  cfg.decay_factor = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("velocity starts at zero") {
  const MlpModel m = init_model(mlp_layers(2, {3}, 1, 0.0, true), 1);
  const VelocityState s = VelocityState::zeros_like(m);
  const auto params = m.parameters();
  REQUIRE(s.velocity.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(s.velocity[i].same_shape(*params[i]));
    for (double v : s.velocity[i].values()) CHECK(v == 0.0);
  }
}

TEST_CASE("linear least squares recovers the slope") {
  const std::size_t n = 200;
  Matrix x(n, 1), y(n, 1);
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    y(i, 0) = 3.0 * x(i, 0);
  }
  // Normal equations for y = w x + b.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x(i, 0);
    sy += y(i, 0);
    sxx += x(i, 0) * x(i, 0);
    sxy += x(i, 0) * y(i, 0);
  }
  const double w_ls = (n * sxy - sx * sy) / (n * sxx - sx * sx);

  MlpModel m = init_model({LayerSpec::linear(1, 1)}, 7);
  TrainConfig cfg;
  cfg.seed = 1;
  train(m, x, y, Objective::squared_error(), cfg);
  CHECK(std::abs(m.layers()[0].weight(0, 0) - w_ls) < 1e-3);
  CHECK(std::abs(m.layers()[0].weight(0, 0) - 3.0) < 1e-3);
  CHECK(m.mode() == Mode::Eval);
}

TEST_CASE("constant model converges to the 0.75 pinball minimizer") {
  const Matrix y = Matrix::from_rows({{1}, {2}, {3}, {4}});
  const Matrix x(4, 1, 1.0);
  MlpModel m = constant_model();
  TrainConfig cfg;
  cfg.seed = 5;
  train(m, x, y, Objective::pinball(0.75), cfg);
  CHECK(m.layers()[0].weight(0, 0) == 0.0);
  // With n tau = 3 every c in [y(3), y(4)] = [3, 4] minimizes the empirical risk.
  const double b = m.layers()[0].bias(0, 0);
  INFO("bias = " << b);
  CHECK(b >= 3.0 - 0.1);
  CHECK(b <= 4.0 + 0.1);

  // A sample whose n tau is not an integer has a unique minimizer: the ceil(n tau)-th order statistic.
  const Matrix y5 = Matrix::from_rows({{5}, {1}, {4}, {2}, {3}});
  MlpModel m5 = constant_model();
  train(m5, Matrix(5, 1, 1.0), y5, Objective::pinball(0.75), cfg);
  CHECK(std::abs(m5.layers()[0].bias(0, 0) - 4.0) < 0.1);
}

TEST_CASE("training is deterministic in the seed") {
  Rng rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(50, 2), y(50, 1);
  for (double& v : x.values()) v = n(rng);
  for (double& v : y.values()) v = n(rng);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.seed = 77;
  const auto spec = mlp_layers(2, {8, 8}, 3, 0.1, true);
  const Objective obj = Objective::composite(QuantileLevels({0.1, 0.5, 0.9}));
  MlpModel a = init_model(spec, 1), b = init_model(spec, 1);
  const TrainHistory ha = train(a, x, y, obj, cfg);
  const TrainHistory hb = train(b, x, y, obj, cfg);
  CHECK(ha.epoch_loss == hb.epoch_loss);
  CHECK(ha.epoch_loss.size() == 5);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
  for (std::size_t i = 0; i < a.layers().size(); ++i) CHECK(a.layers()[i].running_var == b.layers()[i].running_var);

  MlpModel c = init_model(spec, 1);
  cfg.seed = 78;
  train(c, x, y, obj, cfg);
  CHECK_FALSE(*c.parameters()[0] == *pa[0]);
}

TEST_CASE("frozen parameters keep their value") {
  Rng rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(20, 2), y(20, 1);
  for (double& v : x.values()) v = n(rng);
  for (double& v : y.values()) v = n(rng);
  MlpModel m = init_model(mlp_layers(2, {4}, 1, 0.0, false), 3);
  const Matrix w0 = m.layers()[0].weight;
  m.freeze(0);
  TrainConfig cfg;
  cfg.epochs = 3;
  train(m, x, y, Objective::squared_error(), cfg);
  CHECK(m.layers()[0].weight == w0);
}

TEST_CASE("training input validation") {
  MlpModel m = init_model(mlp_layers(2, {4}, 1, 0.0, true), 1);
  TrainConfig cfg;
  CHECK_THROWS(train(m, Matrix(0, 2), Matrix(0, 1), Objective::squared_error(), cfg));
  CHECK_THROWS_AS(train(m, Matrix(5, 3), Matrix(5, 1), Objective::squared_error(), cfg), ShapeError);
  CHECK_THROWS_AS(train(m, Matrix(5, 2), Matrix(4, 1), Objective::squared_error(), cfg), ShapeError);
  CHECK_THROWS_AS(train(m, Matrix(5, 2), Matrix(5, 2), Objective::squared_error(), cfg), ShapeError);
  CHECK_THROWS_AS(train(m, Matrix(5, 2), Matrix(5, 1), Objective::composite(QuantileLevels({0.2, 0.8})), cfg),
                  ShapeError);
  CHECK_THROWS_AS(train(m, Matrix(1, 2), Matrix(1, 1), Objective::squared_error(), cfg), DegenerateBatchError);
}

TEST_CASE("size-1 tail batches are skipped with batch norm") {
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(9, 2), y(9, 1);
  for (double& v : x.values()) v = n(rng);
  for (double& v : y.values()) v = n(rng);
  MlpModel m = init_model(mlp_layers(2, {4}, 1, 0.0, true), 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  CHECK_NOTHROW(train(m, x, y, Objective::squared_error(), cfg));
}

TEST_CASE("convex problems never end above their starting loss") {
  // 50 runs of linear models with squared or pinball loss at lr0 = 0.01.
  int failures = 0;
  for (int run = 0; run < 50; ++run) {
    Rng rng(1000 + run);
    std::normal_distribution<double> n(0.0, 1.0);
    const std::size_t rows = 40 + static_cast<std::size_t>(run);
    Matrix x(rows, 3), y(rows, 1);
    for (double& v : x.values()) v = n(rng);
    for (std::size_t i = 0; i < rows; ++i) y(i, 0) = x(i, 0) - 2.0 * x(i, 2) + 0.5 * n(rng);
    const Objective obj = run % 2 ? Objective::squared_error() : Objective::pinball(0.2 + 0.01 * run);
    MlpModel m = init_model({LayerSpec::linear(3, 1)}, static_cast<std::uint64_t>(run));
    const double before = full_loss(m, x, y, obj);
    TrainConfig cfg;
    cfg.lr0 = 0.01;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.seed = static_cast<std::uint64_t>(run);
    train(m, x, y, obj, cfg);
    if (full_loss(m, x, y, obj) > before) ++failures;
  }
  CHECK(failures == 0);
}
