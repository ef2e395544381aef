// SPDX-License-Identifier: Apache-2.0
#include "qrnn/metrics.hpp"

#include <cmath>
#include <string>

#include "qrnn/error.hpp"

namespace qrnn {

namespace {

void require_equal(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": lengths differ (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  if (a == 0) throw ShapeError(std::string(op) + ": empty input");
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shapes differ");
}

}  // namespace

double d2(double t) noexcept { return std::min(std::abs(t), t * t); }

double delta_n2(std::span<const double> pred, std::span<const double> truth) {
  require_equal(pred.size(), truth.size(), "delta_n2");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += d2(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double delta_n2(const Matrix& pred, const Matrix& truth) {
  require_same(pred, truth, "delta_n2");
  return delta_n2(pred.values(), truth.values());
}

double quantile_mse(std::span<const double> pred, std::span<const double> truth) {
  require_equal(pred.size(), truth.size(), "quantile_mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double quantile_mse(const Matrix& pred, const Matrix& truth) {
  require_same(pred, truth, "quantile_mse");
  return quantile_mse(pred.values(), truth.values());
}

double coverage(std::span<const double> y, std::span<const double> pred) {
  require_equal(y.size(), pred.size(), "coverage");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] <= pred[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

double coverage(const Matrix& y, const Matrix& pred) {
  require_same(y, pred, "coverage");
  return coverage(y.values(), pred.values());
}

std::size_t crossing_count(const Matrix& preds) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < preds.rows(); ++i)
    for (std::size_t j = 0; j + 1 < preds.cols(); ++j)
      if (preds(i, j) > preds(i, j + 1)) ++count;
  return count;
}

}  // namespace qrnn
