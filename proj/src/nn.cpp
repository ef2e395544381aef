// SPDX-License-Identifier: Apache-2.0
#include "qrnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "qrnn/error.hpp"

namespace qrnn {

const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::Linear: return "linear";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Dropout: return "dropout";
  }
  return "unknown";
}

std::vector<LayerSpec> mlp_layers(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                  std::size_t output_dim, double dropout_rate, bool batch_norm) {
  std::vector<LayerSpec> spec;
  std::size_t width = input_dim;
  for (std::size_t h : hidden) {
    spec.push_back(LayerSpec::linear(width, h));
    if (batch_norm) spec.push_back(LayerSpec::batch_norm(h));
    spec.push_back(LayerSpec::relu());
    if (dropout_rate > 0.0) spec.push_back(LayerSpec::dropout(dropout_rate));
    width = h;
  }
  spec.push_back(LayerSpec::linear(width, output_dim));
  return spec;
}

MlpModel::MlpModel(std::vector<LayerSpec> spec) {
  // 0 means "not fixed yet": a model of pure ReLU/Dropout layers accepts any width.
  std::size_t width = 0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& s = spec[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(s.kind) + ")";
    Layer layer{s, {}, {}, {}, {}, {}, {}};
    switch (s.kind) {
      case LayerKind::Linear:
        if (s.in == 0 || s.out == 0) throw ShapeError(where + ": zero dimension");
        if (width != 0 && width != s.in)
          throw ShapeError(where + ": expects " + std::to_string(s.in) + " inputs but previous layer produces " +
                           std::to_string(width));
        if (input_dim_ == 0) input_dim_ = s.in;
        layer.weight = Matrix(s.out, s.in);
        layer.bias = Matrix(1, s.out);
        width = s.out;
        break;
      case LayerKind::BatchNorm:
        if (s.in == 0 || s.in != s.out) throw ShapeError(where + ": invalid width");
        if (width != 0 && width != s.in)
          throw ShapeError(where + ": width " + std::to_string(s.in) + " does not match " + std::to_string(width));
        if (input_dim_ == 0) input_dim_ = s.in;
        layer.gamma = Matrix(1, s.in, 1.0);
        layer.beta = Matrix(1, s.in, 0.0);
        layer.running_mean = Matrix(1, s.in, 0.0);
        layer.running_var = Matrix(1, s.in, 1.0);
        width = s.in;
        break;
      case LayerKind::ReLU:
        break;
      case LayerKind::Dropout:
        if (!(s.rate >= 0.0 && s.rate < 1.0)) throw DomainError(where + ": rate must lie in [0,1)");
        break;
    }
    layers_.push_back(std::move(layer));
  }
  output_dim_ = width;
  frozen_.assign(parameters().size(), false);
}

std::vector<LayerSpec> MlpModel::spec() const {
  std::vector<LayerSpec> out;
  out.reserve(layers_.size());
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

std::vector<Matrix*> MlpModel::parameters() {
  std::vector<Matrix*> out;
  for (auto& l : layers_) {
    if (l.spec.kind == LayerKind::Linear) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    } else if (l.spec.kind == LayerKind::BatchNorm) {
      out.push_back(&l.gamma);
      out.push_back(&l.beta);
    }
  }
  return out;
}

std::vector<const Matrix*> MlpModel::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& l : layers_) {
    if (l.spec.kind == LayerKind::Linear) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    } else if (l.spec.kind == LayerKind::BatchNorm) {
      out.push_back(&l.gamma);
      out.push_back(&l.beta);
    }
  }
  return out;
}

std::vector<std::string> MlpModel::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "layers[" + std::to_string(i) + "].";
    if (layers_[i].spec.kind == LayerKind::Linear) {
      out.push_back(prefix + "w");
      out.push_back(prefix + "b");
    } else if (layers_[i].spec.kind == LayerKind::BatchNorm) {
      out.push_back(prefix + "gamma");
      out.push_back(prefix + "beta");
    }
  }
  return out;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* p : parameters()) n += p->size();
  return n;
}

std::size_t MlpModel::linear_parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    if (l.spec.kind == LayerKind::Linear) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpModel::freeze(std::size_t param_index, bool frozen) {
  if (param_index >= frozen_.size()) throw std::out_of_range("MlpModel::freeze: no such parameter");
  frozen_[param_index] = frozen;
}

bool MlpModel::frozen(std::size_t param_index) const {
  if (param_index >= frozen_.size()) throw std::out_of_range("MlpModel::frozen: no such parameter");
  return frozen_[param_index];
}

bool MlpModel::has_batch_norm() const noexcept {
  return std::any_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return l.spec.kind == LayerKind::BatchNorm; });
}

bool MlpModel::has_dropout() const noexcept {
  return std::any_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return l.spec.kind == LayerKind::Dropout; });
}

void MlpModel::validate_input(const Matrix& x) const {
  if (x.rows() == 0) throw ShapeError("forward: empty batch");
  if (input_dim_ != 0 && x.cols() != input_dim_)
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(input_dim_));
}

namespace {

Matrix linear_forward(const Layer& l, const Matrix& x) {
  Matrix y = matmul_nt(x, l.weight);
  const double* b = l.bias.data();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return y;
}

void relu_inplace(Matrix& x) {
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
}

// Normalizes with the given per-feature statistics, storing xhat and the scale.
Matrix batch_norm_apply(const Layer& l, const Matrix& x, std::span<const double> mean,
                        std::span<const double> inv_std, Matrix& xhat) {
  const std::size_t n = x.rows(), w = x.cols();
  xhat = Matrix(n, w);
  Matrix y(n, w);
  const double* g = l.gamma.data();
  const double* bt = l.beta.data();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double h = (x(r, c) - mean[c]) * inv_std[c];
      xhat(r, c) = h;
      y(r, c) = g[c] * h + bt[c];
    }
  }
  return y;
}

}  // namespace

Matrix MlpModel::forward(const Matrix& x, ForwardCache& cache, Rng* rng) {
  validate_input(x);
  const bool train = mode_ == Mode::Train;
  const std::size_t n = x.rows();
  if (train && n == 1 && has_batch_norm())
    throw DegenerateBatchError("forward: Train-mode batch normalization needs at least 2 samples");

  const bool reuse_masks = cache.freeze_dropout_masks && cache.owner == this &&
                           cache.aux.size() == layers_.size() && cache.batch == n;
  if (!reuse_masks) {
    cache.aux.assign(layers_.size(), Matrix{});
    cache.freeze_dropout_masks = false;
  }
  cache.mode = mode_;
  cache.batch = n;
  cache.owner = this;
  cache.inputs.assign(layers_.size(), Matrix{});
  cache.inv_std.assign(layers_.size(), {});

  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    cache.inputs[i] = h;
    switch (l.spec.kind) {
      case LayerKind::Linear:
        h = linear_forward(l, h);
        break;
      case LayerKind::ReLU:
        relu_inplace(h);
        break;
      case LayerKind::BatchNorm: {
        const std::size_t w = h.cols();
        std::vector<double> mean(w), inv_std(w);
        if (train) {
          std::vector<double> var(w, 0.0);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c) mean[c] += h(r, c);
          for (double& m : mean) m /= static_cast<double>(n);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c) {
              const double d = h(r, c) - mean[c];
              var[c] += d * d;
            }
          for (std::size_t c = 0; c < w; ++c) {
            const double biased = var[c] / static_cast<double>(n);
            const double unbiased = var[c] / static_cast<double>(n - 1);
            inv_std[c] = 1.0 / std::sqrt(biased + kBatchNormEps);
            l.running_mean.data()[c] =
                kRunningMomentum * l.running_mean.data()[c] + (1.0 - kRunningMomentum) * mean[c];
            l.running_var.data()[c] =
                kRunningMomentum * l.running_var.data()[c] + (1.0 - kRunningMomentum) * unbiased;
          }
        } else {
          for (std::size_t c = 0; c < w; ++c) {
            mean[c] = l.running_mean.data()[c];
            inv_std[c] = 1.0 / std::sqrt(l.running_var.data()[c] + kBatchNormEps);
          }
        }
        h = batch_norm_apply(l, h, mean, inv_std, cache.aux[i]);
        cache.inv_std[i] = std::move(inv_std);
        break;
      }
      case LayerKind::Dropout: {
        if (!train || l.spec.rate == 0.0) {
          cache.aux[i] = Matrix{};
          break;
        }
        Matrix& mask = cache.aux[i];
        if (!reuse_masks || !mask.same_shape(h)) {
          if (rng == nullptr) throw std::invalid_argument("forward: Train-mode dropout requires an RNG");
          mask = Matrix(h.rows(), h.cols());
          const double keep_scale = 1.0 / (1.0 - l.spec.rate);
          std::uniform_real_distribution<double> u(0.0, 1.0);
          for (double& m : mask.values()) m = u(*rng) < l.spec.rate ? 0.0 : keep_scale;
        }
        auto hv = h.values();
        auto mv = mask.values();
        for (std::size_t k = 0; k < hv.size(); ++k) hv[k] *= mv[k];
        break;
      }
    }
  }
  return h;
}

Matrix MlpModel::predict(const Matrix& x) const {
  validate_input(x);
  Matrix h = x;
  for (const Layer& l : layers_) {
    switch (l.spec.kind) {
      case LayerKind::Linear:
        h = linear_forward(l, h);
        break;
      case LayerKind::ReLU:
        relu_inplace(h);
        break;
      case LayerKind::BatchNorm: {
        const std::size_t w = h.cols();
        const double* g = l.gamma.data();
        const double* bt = l.beta.data();
        const double* rm = l.running_mean.data();
        const double* rv = l.running_var.data();
        std::vector<double> inv_std(w);
        for (std::size_t c = 0; c < w; ++c) inv_std[c] = 1.0 / std::sqrt(rv[c] + kBatchNormEps);
        for (std::size_t r = 0; r < h.rows(); ++r) {
          auto row = h.row(r);
          for (std::size_t c = 0; c < w; ++c) row[c] = g[c] * ((row[c] - rm[c]) * inv_std[c]) + bt[c];
        }
        break;
      }
      case LayerKind::Dropout:
        break;
    }
  }
  return h;
}

GradientBundle MlpModel::backward(const ForwardCache& cache, const Matrix& dloss_dy) const {
  if (cache.empty()) throw CacheError("backward: no forward cache");
  if (cache.owner != this || cache.inputs.size() != layers_.size())
    throw CacheError("backward: cache was produced by a different model");
  if (dloss_dy.rows() != cache.batch)
    throw CacheError("backward: upstream gradient batch does not match the cached forward");
  if (output_dim_ != 0 && dloss_dy.cols() != output_dim_)
    throw ShapeError("backward: upstream gradient has wrong width");

  GradientBundle out;
  out.grads.resize(frozen_.size());
  std::size_t param = frozen_.size();
  Matrix g = dloss_dy;
  const std::size_t n = cache.batch;

  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Layer& l = layers_[i];
    const Matrix& in = cache.inputs[i];
    switch (l.spec.kind) {
      case LayerKind::Linear: {
        param -= 2;
        Matrix db(1, l.spec.out);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto row = g.row(r);
          for (std::size_t c = 0; c < row.size(); ++c) db.data()[c] += row[c];
        }
        out.grads[param] = matmul_tn(g, in);
        out.grads[param + 1] = std::move(db);
        g = matmul_nn(g, l.weight);
        break;
      }
      case LayerKind::ReLU: {
        auto gv = g.values();
        auto iv = in.values();
        for (std::size_t k = 0; k < gv.size(); ++k)
          if (!(iv[k] > 0.0)) gv[k] = 0.0;
        break;
      }
      case LayerKind::BatchNorm: {
        param -= 2;
        const Matrix& xhat = cache.aux[i];
        const auto& inv_std = cache.inv_std[i];
        const std::size_t w = g.cols();
        Matrix dgamma(1, w), dbeta(1, w);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < w; ++c) {
            dgamma.data()[c] += g(r, c) * xhat(r, c);
            dbeta.data()[c] += g(r, c);
          }
        const double* gam = l.gamma.data();
        if (cache.mode == Mode::Train) {
          // dx = inv_std / n * (n * dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
          const double nd = static_cast<double>(n);
          for (std::size_t c = 0; c < w; ++c) {
            const double sum_dxhat = gam[c] * dbeta.data()[c];
            const double sum_dxhat_xhat = gam[c] * dgamma.data()[c];
            for (std::size_t r = 0; r < n; ++r) {
              const double dxhat = g(r, c) * gam[c];
              g(r, c) = inv_std[c] / nd * (nd * dxhat - sum_dxhat - xhat(r, c) * sum_dxhat_xhat);
            }
          }
        } else {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c) g(r, c) *= gam[c] * inv_std[c];
        }
        out.grads[param] = std::move(dgamma);
        out.grads[param + 1] = std::move(dbeta);
        break;
      }
      case LayerKind::Dropout: {
        const Matrix& mask = cache.aux[i];
        if (mask.empty()) break;
        auto gv = g.values();
        auto mv = mask.values();
        for (std::size_t k = 0; k < gv.size(); ++k) gv[k] *= mv[k];
        break;
      }
    }
  }
  return out;
}

MlpModel init_model(std::vector<LayerSpec> spec, std::uint64_t seed) {
  MlpModel model(std::move(spec));
  Rng rng(seed);
  for (Layer& l : model.layers()) {
    if (l.spec.kind != LayerKind::Linear) continue;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(l.spec.in)));
    for (double& w : l.weight.values()) w = normal(rng);
  }
  return model;
}

}  // namespace qrnn
