// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "qrnn/matrix.hpp"

namespace qrnn {

/// Strictly increasing quantile levels in (0,1).
class QuantileLevels {
public:
  QuantileLevels() = default;
  explicit QuantileLevels(std::vector<double> taus);

  /// 0.05, 0.25, 0.50, 0.75, 0.95
  static QuantileLevels paper_grid();

  std::size_t size() const noexcept { return taus_.size(); }
  bool empty() const noexcept { return taus_.empty(); }
  double operator[](std::size_t i) const { return taus_[i]; }
  const std::vector<double>& values() const noexcept { return taus_; }
  /// Column holding `tau`, or -1 when absent (exact match).
  long index_of(double tau) const noexcept;

private:
  std::vector<double> taus_;
};

/// Direction of a geometric quantile; must lie in the closed Euclidean unit ball.
class DirectionU {
public:
  DirectionU() = default;
  explicit DirectionU(std::vector<double> u);
  static DirectionU zero(std::size_t p) { return DirectionU(std::vector<double>(p, 0.0)); }

  std::size_t size() const noexcept { return u_.size(); }
  const std::vector<double>& values() const noexcept { return u_; }

private:
  std::vector<double> u_;
};

/// Loss value with its gradient w.r.t. the network output.
struct LossValue {
  double loss = 0.0;
  Matrix grad;
};

void check_tau(double tau);

/// rho_tau(r) = max(tau r, (tau - 1) r)
double pinball(double tau, double residual);
/// d/df rho_tau(y - f). Ties (y == f) take the y <= f branch and return 1 - tau.
double pinball_grad(double tau, double y, double f);

/// Numerically stable log(1 + e^t).
double softplus(double t) noexcept;
double logistic(double t) noexcept;

/// Cumulative-softplus reconstruction: q0 = h0, qj = q(j-1) + softplus(hj). Rows are strictly
/// increasing whenever the softplus terms are representable (> 0).
Matrix composite_predict(const Matrix& h);

/// Mean over the batch of sum_j rho_{tau_j}(y - q_j) with q = composite_predict(h).
LossValue composite_loss(const Matrix& y, const Matrix& h, const QuantileLevels& taus);

/// Mean pinball loss of a single-column prediction.
LossValue pinball_loss(double tau, const Matrix& y, const Matrix& f);

/// Mean over the batch of ||r|| + r.u with r = y - f. The gradient treats r/||r|| as 0 when
/// ||r|| < 1e-12.
LossValue geometric_loss(const DirectionU& u, const Matrix& y, const Matrix& f);

/// (1/batch) sum_i sum_j rho_tau(y_ij - f_ij)
LossValue marginal_loss(double tau, const Matrix& y, const Matrix& f);

/// (1/batch) sum_i ||y_i - f_i||^2
LossValue squared_loss(const Matrix& y, const Matrix& f);

enum class LossKind { Pinball, Composite, SquaredError, Geometric, Marginal };

const char* to_string(LossKind kind) noexcept;
LossKind loss_kind_from_string(const std::string& name);

/// Training objective: a loss kind plus its parameters.
struct Objective {
  LossKind kind = LossKind::SquaredError;
  double tau = 0.5;          // Pinball, Marginal
  QuantileLevels taus;       // Composite
  DirectionU direction;      // Geometric; empty means u = 0

  static Objective pinball(double tau);
  static Objective composite(QuantileLevels taus);
  static Objective squared_error();
  static Objective geometric(DirectionU u);
  static Objective marginal(double tau);

  /// Network output width required for a response of width `response_dim`.
  std::size_t output_dim(std::size_t response_dim) const;
  /// Throws ShapeError if the objective cannot consume outputs/targets of these widths.
  void check_dims(std::size_t output_cols, std::size_t response_cols) const;
  LossValue evaluate(const Matrix& y, const Matrix& out) const;
};

}  // namespace qrnn
