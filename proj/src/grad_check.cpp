// SPDX-License-Identifier: Apache-2.0
#include "qrnn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace qrnn {

double relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double grad_check(const MlpModel& model, const OutputLoss& loss, const Matrix& x, const Matrix& y,
                  const GradCheckOptions& options) {
  MlpModel work = model;
  Rng rng(options.seed);
  ForwardCache cache;
  const Matrix out = work.forward(x, cache, &rng);
  cache.freeze_dropout_masks = true;
  const GradientBundle analytic = work.backward(cache, loss(y, out).grad);

  auto params = work.parameters();
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    if (!(options.skip_frozen && work.frozen(p)))
      for (std::size_t k = 0; k < params[p]->size(); ++k) coords.emplace_back(p, k);
  if (coords.size() > options.samples) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.samples);
  }

  auto loss_at = [&]() {
    ForwardCache probe = cache;
    return loss(y, work.forward(x, probe, nullptr)).loss;
  };

  double worst = 0.0;
  for (auto [p, k] : coords) {
    double& theta = params[p]->data()[k];
    const double saved = theta;
    theta = saved + options.step;
    const double up = loss_at();
    theta = saved - options.step;
    const double down = loss_at();
    theta = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    worst = std::max(worst, relative_error(analytic.grads[p].data()[k], numeric));
  }
  return worst;
}

}  // namespace qrnn

namespace qrnn {

namespace {

// Targets for piecewise-linear losses sit at least 0.5 away from every prediction.
Matrix targets_for(const Objective& objective, const Matrix& out, std::size_t response_dim, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Matrix y(out.rows(), response_dim);
  switch (objective.kind) {
    case LossKind::SquaredError:
      for (double& v : y.values()) v = 2.0 * u(rng) - 1.0;
      break;
    case LossKind::Pinball:
    case LossKind::Marginal:
      for (std::size_t k = 0; k < y.size(); ++k)
        y.data()[k] = out.data()[k] + (coin(rng) ? 1.0 : -1.0) * (0.5 + u(rng));
      break;
    case LossKind::Composite: {
      const Matrix q = composite_predict(out);
      for (std::size_t i = 0; i < y.rows(); ++i) {
        const auto row = q.row(i);
        const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
        y(i, 0) = coin(rng) ? *hi + 0.5 + u(rng) : *lo - 0.5 - u(rng);
      }
      break;
    }
    case LossKind::Geometric:
      for (std::size_t i = 0; i < y.rows(); ++i) {
        const double angle = 6.283185307179586 * u(rng);
        const double radius = 0.5 + u(rng);
        for (std::size_t j = 0; j < y.cols(); ++j)
          y(i, j) = out(i, j) + radius * (j == 0 ? std::cos(angle) : j == 1 ? std::sin(angle) : 0.0);
      }
      break;
  }
  return y;
}

// Every ReLU input is away from the kink and every unit is active for some row; otherwise the
// central difference straddles a kink or compares an exactly-zero gradient with rounding noise.
// A unit active on every row feeding a later train-mode BatchNorm has the same problem, since the
// batch mean absorbs a constant shift.
bool well_conditioned(const MlpModel& model, const ForwardCache& cache) {
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.kind != LayerKind::ReLU) continue;
    const bool later_bn =
        cache.mode == Mode::Train && std::any_of(layers.begin() + static_cast<std::ptrdiff_t>(i), layers.end(),
                                                 [](const Layer& l) { return l.spec.kind == LayerKind::BatchNorm; });
    const Matrix& z = cache.inputs[i];
    for (std::size_t c = 0; c < z.cols(); ++c) {
      std::size_t active = 0;
      for (std::size_t r = 0; r < z.rows(); ++r) {
        if (std::abs(z(r, c)) < 1e-3) return false;
        if (z(r, c) > 0.0) ++active;
      }
      if (active == 0 || (later_bn && active == z.rows())) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<GradCheckCase> random_grad_checks(std::size_t trials, std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  Rng rng(seed);
  std::uniform_int_distribution<int> width(3, 8), depth(1, 2), dim(2, 4), kind(0, 4);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  while (cases.size() < trials) {
    const std::size_t in = static_cast<std::size_t>(dim(rng));
    std::vector<std::size_t> hidden(static_cast<std::size_t>(depth(rng)));
    for (auto& h : hidden) h = static_cast<std::size_t>(width(rng));
    const bool bn = coin(rng);
    const double dropout = coin(rng) ? 0.2 : 0.0;

    Objective objective;
    std::size_t response_dim = 1;
    switch (kind(rng)) {
      case 0: objective = Objective::squared_error(); response_dim = 2; break;
      case 1: objective = Objective::pinball(0.2 + 0.6 * std::uniform_real_distribution<double>(0, 1)(rng)); break;
      case 2: objective = Objective::composite(QuantileLevels({0.2, 0.5, 0.7})); break;
      case 3: objective = Objective::geometric(DirectionU({0.3, -0.4})); response_dim = 2; break;
      default: objective = Objective::marginal(0.3); response_dim = 2; break;
    }
    MlpModel model = init_model(mlp_layers(in, hidden, objective.output_dim(response_dim), dropout, bn), rng());
    // Zero biases put fully inactive rows exactly on a ReLU kink, so perturb them. BatchNorm gets
    // non-trivial state so the Eval path is exercised away from the identity.
    for (Layer& l : model.layers()) {
      if (l.spec.kind == LayerKind::Linear)
        for (double& v : l.bias.values()) v = 0.1 * normal(rng);
      if (l.spec.kind != LayerKind::BatchNorm) continue;
      for (double& v : l.gamma.values()) v = 1.0 + 0.3 * normal(rng);
      for (double& v : l.beta.values()) v = 0.3 * normal(rng);
      for (double& v : l.running_mean.values()) v = 0.2 * normal(rng);
      for (double& v : l.running_var.values()) v = 0.5 + std::abs(normal(rng));
    }
    const bool train_mode = coin(rng);
    model.set_mode(train_mode ? Mode::Train : Mode::Eval);
    if (train_mode) {
      // Batch statistics cancel the bias of a Linear feeding BatchNorm: its gradient is exactly
      // zero and the central difference is pure rounding noise.
      std::size_t param = 0;
      const auto& layers = model.layers();
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].spec.kind == LayerKind::Linear) {
          if (i + 1 < layers.size() && layers[i + 1].spec.kind == LayerKind::BatchNorm) model.freeze(param + 1);
          param += 2;
        } else if (layers[i].spec.kind == LayerKind::BatchNorm) {
          param += 2;
        }
      }
    }

    Matrix x(8, in);
    for (double& v : x.values()) v = normal(rng);
    // The targets are placed relative to the same (frozen-mask) output the check will see.
    const std::uint64_t check_seed = rng();
    MlpModel probe = model;
    Rng probe_rng(check_seed);
    ForwardCache cache;
    const Matrix out = probe.forward(x, cache, &probe_rng);
    if (!well_conditioned(probe, cache)) continue;
    const Matrix y = targets_for(objective, out, response_dim, rng);

    GradCheckOptions opts;
    opts.seed = check_seed;
    GradCheckCase c;
    c.max_rel_error = grad_check(
        model, [&](const Matrix& yy, const Matrix& o) { return objective.evaluate(yy, o); }, x, y, opts);
    c.description = std::string(to_string(objective.kind)) + " in=" + std::to_string(in) +
                    " hidden=" + std::to_string(hidden.size()) + "x" + std::to_string(hidden[0]) +
                    (bn ? " bn" : "") + (dropout > 0 ? " dropout" : "") + (train_mode ? " train" : " eval");
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace qrnn
