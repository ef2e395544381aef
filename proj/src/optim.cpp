// SPDX-License-Identifier: Apache-2.0
#include "qrnn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "qrnn/error.hpp"

namespace qrnn {

void TrainConfig::validate() const {
  if (epochs == 0) throw DomainError("TrainConfig: epochs must be positive");
  if (batch_size == 0) throw DomainError("TrainConfig: batch_size must be positive");
  if (!(lr0 > 0.0)) throw DomainError("TrainConfig: lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("TrainConfig: momentum must lie in [0,1)");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw DomainError("TrainConfig: decay_factor must lie in (0,1]");
  if (decay_every == 0) throw DomainError("TrainConfig: decay_every must be positive");
}

double TrainConfig::learning_rate(std::size_t epoch) const {
  return lr0 * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
}

VelocityState VelocityState::zeros_like(const MlpModel& model) {
  VelocityState s;
  for (const Matrix* p : model.parameters()) s.velocity.emplace_back(p->rows(), p->cols());
  return s;
}

void nesterov_step(Matrix& theta, Matrix& velocity, const Matrix& grad, double lr, double mu) {
  if (!theta.same_shape(velocity) || !theta.same_shape(grad))
    throw ShapeError("nesterov_step: parameter, velocity and gradient shapes differ");
  auto t = theta.values();
  auto v = velocity.values();
  auto g = grad.values();
  for (std::size_t k = 0; k < t.size(); ++k) {
    v[k] = mu * v[k] - lr * g[k];
    t[k] += mu * v[k] - lr * g[k];
  }
}

TrainHistory train(MlpModel& model, const Matrix& x, const Matrix& y, const Objective& objective,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (x.rows() == 0) throw std::invalid_argument("train: empty dataset");
  if (x.rows() != y.rows()) throw ShapeError("train: inputs and responses have different row counts");
  if (model.input_dim() != 0 && x.cols() != model.input_dim())
    throw ShapeError("train: data has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(model.input_dim()));
  objective.check_dims(model.output_dim(), y.cols());

  const bool batch_norm = model.has_batch_norm();
  const std::size_t n = x.rows();
  const std::size_t batch = std::min(cfg.batch_size, n);
  if (batch_norm && batch < 2)
    throw DegenerateBatchError("train: BatchNorm models need at least 2 samples per batch");

  Rng rng(cfg.seed);
  VelocityState state = VelocityState::zeros_like(model);
  std::vector<Matrix*> params = model.parameters();
  std::vector<std::size_t> order(n);
  TrainHistory history;
  model.set_mode(Mode::Train);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      if (len == 1 && batch_norm) continue;
      std::span<const std::size_t> idx(order.data() + start, len);
      const Matrix xb = x.gather_rows(idx);
      const Matrix yb = y.gather_rows(idx);
      ForwardCache cache;
      const Matrix out = model.forward(xb, cache, &rng);
      const LossValue lv = objective.evaluate(yb, out);
      if (!std::isfinite(lv.loss))
        throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
      GradientBundle grads = model.backward(cache, lv.grad);
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (model.frozen(p)) continue;
        nesterov_step(*params[p], state.velocity[p], grads.grads[p], lr, cfg.momentum);
      }
      loss_sum += lv.loss * static_cast<double>(len);
      seen += len;
    }
    history.epoch_loss.push_back(seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0);
  }
  model.set_mode(Mode::Eval);
  return history;
}

}  // namespace qrnn
