// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qrnn/matrix.hpp"

namespace qrnn {

struct EvalReport {
  double mse = 0.0;
  double delta_n2 = 0.0;
  std::vector<double> coverage;  // one entry per evaluated level
  std::size_t crossings = 0;
  std::size_t n_test = 0;
};

/// min(|t|, t^2)
double d2(double t) noexcept;

/// (1/n) sum_i d2(pred_i - truth_i)
double delta_n2(std::span<const double> pred, std::span<const double> truth);
double delta_n2(const Matrix& pred, const Matrix& truth);

/// Mean squared difference; for matrices the mean runs over all n*p entries.
double quantile_mse(std::span<const double> pred, std::span<const double> truth);
double quantile_mse(const Matrix& pred, const Matrix& truth);

/// Fraction of entries with y <= pred.
double coverage(std::span<const double> y, std::span<const double> pred);
double coverage(const Matrix& y, const Matrix& pred);

/// Number of (i, j) with preds(i, j) > preds(i, j + 1); columns ordered by increasing level.
std::size_t crossing_count(const Matrix& preds);

}  // namespace qrnn
