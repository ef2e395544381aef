// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qrnn/losses.hpp"
#include "qrnn/nn.hpp"

namespace qrnn {

/// Loss of a network output against fixed targets.
using OutputLoss = std::function<LossValue(const Matrix& y, const Matrix& out)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates compared; every parameter is checked when the model has fewer.
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  /// Leave frozen parameters out of the comparison.
  bool skip_frozen = true;
};

/// Relative error |a - b| / max(1e-8, |a| + |b|).
double relative_error(double analytic, double numeric) noexcept;

/// Maximum relative error between backward() and central differences
/// (L(theta + h) - L(theta - h)) / 2h over a random subsample of parameter coordinates.
/// Works on a copy of `model`. Train-mode models have their dropout masks sampled once and
/// frozen for the comparison.
double grad_check(const MlpModel& model, const OutputLoss& loss, const Matrix& x, const Matrix& y,
                  const GradCheckOptions& options = {});

struct GradCheckCase {
  std::string description;
  double max_rel_error = 0.0;
};

/// Randomized configurations: 2-4 inputs, 1-2 hidden layers of width 3-8, optional BatchNorm
/// and Dropout, Train or Eval mode, and one of the five objectives, with targets placed away
/// from the loss kinks. Deterministic in `seed`.
std::vector<GradCheckCase> random_grad_checks(std::size_t trials, std::uint64_t seed);

}  // namespace qrnn
