// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qrnn/matrix.hpp"
#include "qrnn/rng.hpp"

namespace qrnn {

enum class LayerKind { Linear, BatchNorm, ReLU, Dropout };

const char* to_string(LayerKind kind) noexcept;

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in = 0;   // Linear fan-in; BatchNorm width
  std::size_t out = 0;  // Linear fan-out; BatchNorm width
  double rate = 0.0;    // Dropout probability, in [0,1)

  static LayerSpec linear(std::size_t in, std::size_t out) { return {LayerKind::Linear, in, out, 0.0}; }
  static LayerSpec batch_norm(std::size_t width) { return {LayerKind::BatchNorm, width, width, 0.0}; }
  static LayerSpec relu() { return {LayerKind::ReLU, 0, 0, 0.0}; }
  static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, rate}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Fully connected ReLU stack. Every hidden block is laid out as
/// Linear -> [BatchNorm] -> ReLU -> [Dropout]; the output layer is a bare Linear.
std::vector<LayerSpec> mlp_layers(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                  std::size_t output_dim, double dropout_rate, bool batch_norm);

enum class Mode { Train, Eval };

/// One layer with its parameters. Unused matrices stay empty for the layer kind.
struct Layer {
  LayerSpec spec;
  Matrix weight;        // Linear, out x in
  Matrix bias;          // Linear, 1 x out
  Matrix gamma;         // BatchNorm, 1 x width
  Matrix beta;          // BatchNorm, 1 x width
  Matrix running_mean;  // BatchNorm, 1 x width
  Matrix running_var;   // BatchNorm, 1 x width
};

/// Activations recorded by a forward pass and consumed by backward.
struct ForwardCache {
  Mode mode = Mode::Eval;
  std::size_t batch = 0;
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> aux;     // BatchNorm: normalized input; Dropout: scaled keep-mask
  std::vector<std::vector<double>> inv_std;  // BatchNorm: 1/sqrt(var + eps) per feature
  /// When set, Dropout layers reuse the masks already stored in `aux` instead of sampling.
  bool freeze_dropout_masks = false;
  const void* owner = nullptr;

  bool empty() const noexcept { return inputs.empty(); }
};

/// Gradient per model parameter, in the order of MlpModel::parameters().
struct GradientBundle {
  std::vector<Matrix> grads;
};

class MlpModel {
public:
  static constexpr double kBatchNormEps = 1e-5;
  /// Weight on the previous running statistic: running = 0.9 * running + 0.1 * batch.
  static constexpr double kRunningMomentum = 0.9;

  MlpModel() = default;
  /// Validates the layer chain and allocates parameters (zeros). See init_model for seeding.
  explicit MlpModel(std::vector<LayerSpec> spec);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::vector<LayerSpec> spec() const;

  /// Trainable tensors: (W, b) per Linear and (gamma, beta) per BatchNorm, in layer order.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
  std::size_t linear_parameter_count() const;

  /// Frozen parameters keep their value during training.
  void freeze(std::size_t param_index, bool frozen = true);
  bool frozen(std::size_t param_index) const;

  bool has_batch_norm() const noexcept;
  bool has_dropout() const noexcept;

  /// Forward pass in the current mode. In Train mode Dropout draws from `rng` and BatchNorm
  /// uses batch statistics and updates the running ones.
  Matrix forward(const Matrix& x, ForwardCache& cache, Rng* rng = nullptr);
  /// Eval-mode forward without side effects; safe for concurrent callers.
  Matrix predict(const Matrix& x) const;
  GradientBundle backward(const ForwardCache& cache, const Matrix& dloss_dy) const;

private:
  void validate_input(const Matrix& x) const;

  std::vector<Layer> layers_;
  std::vector<bool> frozen_;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  Mode mode_ = Mode::Train;
};

/// He-initialized model: W ~ N(0, 2/fan_in), b = 0, gamma = 1, beta = 0, running mean 0 and
/// running variance 1. Deterministic in `seed`.
MlpModel init_model(std::vector<LayerSpec> spec, std::uint64_t seed);

}  // namespace qrnn
