// SPDX-License-Identifier: Apache-2.0
#include "qrnn/losses.hpp"

#include <cmath>
#include <string>

#include "qrnn/error.hpp"

namespace qrnn {

namespace {

constexpr double kNormFloor = 1e-12;

void require_same_shape(const Matrix& y, const Matrix& f, const char* op) {
  if (!y.same_shape(f))
    throw ShapeError(std::string(op) + ": target is " + std::to_string(y.rows()) + "x" +
                     std::to_string(y.cols()) + ", prediction is " + std::to_string(f.rows()) + "x" +
                     std::to_string(f.cols()));
  if (y.rows() == 0) throw ShapeError(std::string(op) + ": empty batch");
}

}  // namespace

QuantileLevels::QuantileLevels(std::vector<double> taus) : taus_(std::move(taus)) {
  for (std::size_t i = 0; i < taus_.size(); ++i) {
    check_tau(taus_[i]);
    if (i > 0 && !(taus_[i] > taus_[i - 1]))
      throw DomainError("QuantileLevels: levels must be strictly increasing");
  }
}

QuantileLevels QuantileLevels::paper_grid() { return QuantileLevels({0.05, 0.25, 0.50, 0.75, 0.95}); }

long QuantileLevels::index_of(double tau) const noexcept {
  for (std::size_t i = 0; i < taus_.size(); ++i)
    if (taus_[i] == tau) return static_cast<long>(i);
  return -1;
}

DirectionU::DirectionU(std::vector<double> u) : u_(std::move(u)) {
  double norm2 = 0.0;
  for (double v : u_) {
    if (!std::isfinite(v)) throw DomainError("DirectionU: non-finite entry");
    norm2 += v * v;
  }
  if (std::sqrt(norm2) > 1.0) throw DomainError("DirectionU: ||u|| must not exceed 1");
}

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("quantile level must lie in (0,1), got " + std::to_string(tau));
}

double pinball(double tau, double residual) {
  check_tau(tau);
  return std::max(tau * residual, (tau - 1.0) * residual);
}

double pinball_grad(double tau, double y, double f) {
  check_tau(tau);
  return y > f ? -tau : 1.0 - tau;
}

double softplus(double t) noexcept { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double logistic(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Matrix composite_predict(const Matrix& h) {
  Matrix q(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    if (h.cols() == 0) continue;
    q(i, 0) = h(i, 0);
    for (std::size_t j = 1; j < h.cols(); ++j) q(i, j) = q(i, j - 1) + softplus(h(i, j));
  }
  return q;
}

LossValue composite_loss(const Matrix& y, const Matrix& h, const QuantileLevels& taus) {
  if (y.cols() != 1) throw ShapeError("composite_loss: response must have one column");
  if (h.cols() != taus.size() || taus.empty())
    throw ShapeError("composite_loss: " + std::to_string(h.cols()) + " heads for " +
                     std::to_string(taus.size()) + " quantile levels");
  if (h.rows() != y.rows() || y.rows() == 0) throw ShapeError("composite_loss: batch mismatch");

  const std::size_t n = y.rows(), m = h.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix q = composite_predict(h);
  LossValue out{0.0, Matrix(n, m)};
  std::vector<double> dq(m);
  for (std::size_t i = 0; i < n; ++i) {
    const double yi = y(i, 0);
    for (std::size_t j = 0; j < m; ++j) {
      out.loss += pinball(taus[j], yi - q(i, j));
      dq[j] = pinball_grad(taus[j], yi, q(i, j)) * inv_n;
    }
    // dL/dh_l = sigma(h_l) * sum_{j >= l} dL/dq_j; the base head receives the full sum.
    double tail = 0.0;
    for (std::size_t l = m; l-- > 0;) {
      tail += dq[l];
      out.grad(i, l) = l == 0 ? tail : tail * logistic(h(i, l));
    }
  }
  out.loss *= inv_n;
  return out;
}

LossValue pinball_loss(double tau, const Matrix& y, const Matrix& f) {
  require_same_shape(y, f, "pinball_loss");
  if (y.cols() != 1) throw ShapeError("pinball_loss: expects a single column");
  return marginal_loss(tau, y, f);
}

LossValue geometric_loss(const DirectionU& u, const Matrix& y, const Matrix& f) {
  require_same_shape(y, f, "geometric_loss");
  const std::size_t n = y.rows(), p = y.cols();
  const bool zero_u = u.size() == 0;
  if (!zero_u && u.size() != p)
    throw ShapeError("geometric_loss: direction has " + std::to_string(u.size()) + " entries for " +
                     std::to_string(p) + " outputs");
  const double inv_n = 1.0 / static_cast<double>(n);
  LossValue out{0.0, Matrix(n, p)};
  for (std::size_t i = 0; i < n; ++i) {
    double norm2 = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double r = y(i, j) - f(i, j);
      norm2 += r * r;
      if (!zero_u) dot += r * u.values()[j];
    }
    const double norm = std::sqrt(norm2);
    out.loss += norm + dot;
    const double unit_scale = norm < kNormFloor ? 0.0 : 1.0 / norm;
    for (std::size_t j = 0; j < p; ++j) {
      const double r = y(i, j) - f(i, j);
      const double uj = zero_u ? 0.0 : u.values()[j];
      out.grad(i, j) = -(r * unit_scale + uj) * inv_n;
    }
  }
  out.loss *= inv_n;
  return out;
}

LossValue marginal_loss(double tau, const Matrix& y, const Matrix& f) {
  check_tau(tau);
  require_same_shape(y, f, "marginal_loss");
  const double inv_n = 1.0 / static_cast<double>(y.rows());
  LossValue out{0.0, Matrix(y.rows(), y.cols())};
  auto yv = y.values();
  auto fv = f.values();
  auto gv = out.grad.values();
  for (std::size_t k = 0; k < yv.size(); ++k) {
    out.loss += pinball(tau, yv[k] - fv[k]);
    gv[k] = pinball_grad(tau, yv[k], fv[k]) * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

LossValue squared_loss(const Matrix& y, const Matrix& f) {
  require_same_shape(y, f, "squared_loss");
  const double inv_n = 1.0 / static_cast<double>(y.rows());
  LossValue out{0.0, Matrix(y.rows(), y.cols())};
  auto yv = y.values();
  auto fv = f.values();
  auto gv = out.grad.values();
  for (std::size_t k = 0; k < yv.size(); ++k) {
    const double r = yv[k] - fv[k];
    out.loss += r * r;
    gv[k] = -2.0 * r * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

const char* to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::Pinball: return "pinball";
    case LossKind::Composite: return "composite";
    case LossKind::SquaredError: return "sqerr";
    case LossKind::Geometric: return "geometric";
    case LossKind::Marginal: return "marginal";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  for (LossKind k : {LossKind::Pinball, LossKind::Composite, LossKind::SquaredError, LossKind::Geometric,
                     LossKind::Marginal})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown loss '" + name + "'");
}

Objective Objective::pinball(double tau) {
  check_tau(tau);
  Objective o;
  o.kind = LossKind::Pinball;
  o.tau = tau;
  return o;
}

Objective Objective::composite(QuantileLevels taus) {
  if (taus.empty()) throw DomainError("composite objective needs at least one level");
  Objective o;
  o.kind = LossKind::Composite;
  o.taus = std::move(taus);
  return o;
}

Objective Objective::squared_error() { return Objective{}; }

Objective Objective::geometric(DirectionU u) {
  Objective o;
  o.kind = LossKind::Geometric;
  o.direction = std::move(u);
  return o;
}

Objective Objective::marginal(double tau) {
  check_tau(tau);
  Objective o;
  o.kind = LossKind::Marginal;
  o.tau = tau;
  return o;
}

std::size_t Objective::output_dim(std::size_t response_dim) const {
  switch (kind) {
    case LossKind::Composite: return taus.size();
    case LossKind::Pinball: return 1;
    default: return response_dim;
  }
}

void Objective::check_dims(std::size_t output_cols, std::size_t response_cols) const {
  const std::string name = to_string(kind);
  switch (kind) {
    case LossKind::Pinball:
    case LossKind::Composite:
      if (response_cols != 1) throw ShapeError(name + " loss needs a univariate response");
      break;
    case LossKind::Geometric:
      if (direction.size() != 0 && direction.size() != response_cols)
        throw ShapeError("geometric loss: direction width does not match the response");
      break;
    default:
      break;
  }
  if (output_cols != output_dim(response_cols))
    throw ShapeError(name + " loss expects " + std::to_string(output_dim(response_cols)) +
                     " network outputs, model has " + std::to_string(output_cols));
}

LossValue Objective::evaluate(const Matrix& y, const Matrix& out) const {
  switch (kind) {
    case LossKind::Pinball: return pinball_loss(tau, y, out);
    case LossKind::Composite: return composite_loss(y, out, taus);
    case LossKind::SquaredError: return squared_loss(y, out);
    case LossKind::Geometric: return geometric_loss(direction, y, out);
    case LossKind::Marginal: return marginal_loss(tau, y, out);
  }
  throw std::logic_error("Objective::evaluate: unknown loss");
}

}  // namespace qrnn
