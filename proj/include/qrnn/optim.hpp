// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "qrnn/losses.hpp"
#include "qrnn/nn.hpp"

namespace qrnn {

struct TrainConfig {
  std::size_t epochs = 200;
  /// Minibatch size; capped at the dataset size.
  std::size_t batch_size = 64;
  double lr0 = 0.1;
  double momentum = 0.9;
  double decay_factor = 0.5;
  std::size_t decay_every = 50;
  std::uint64_t seed = 0;

  void validate() const;
  /// lr0 * decay_factor^floor(epoch / decay_every)
  double learning_rate(std::size_t epoch) const;
};

/// Momentum buffers, one per model parameter, zero-initialized.
struct VelocityState {
  std::vector<Matrix> velocity;

  static VelocityState zeros_like(const MlpModel& model);
};

/// Nesterov update in the lookahead form used by common deep-learning libraries:
///   v' = mu v - lr g,  theta' = theta + mu v' - lr g.
void nesterov_step(Matrix& theta, Matrix& velocity, const Matrix& grad, double lr, double mu);

struct TrainHistory {
  /// Sample-weighted mean training loss of each epoch, measured on the minibatches as seen.
  std::vector<double> epoch_loss;
};

/// Minibatch SGD with Nesterov momentum and step decay. Each epoch visits a seeded random
/// permutation of the rows; size-1 batches are skipped when the model has BatchNorm. The model
/// is left in Eval mode. Fully determined by (model, data, objective, cfg).
TrainHistory train(MlpModel& model, const Matrix& x, const Matrix& y, const Objective& objective,
                   const TrainConfig& cfg);

}  // namespace qrnn
