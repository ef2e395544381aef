// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qrnn/matrix.hpp"

namespace qrnn {

/// Error law of a scenario.
struct NoiseKind {
  enum class Family { StudentT, Laplace, MultivariateT, LaplaceIID };

  Family family = Family::StudentT;
  double df = 2.0;       // StudentT, MultivariateT
  double scale = 1.0;    // Laplace, LaplaceIID
  std::size_t dim = 1;   // MultivariateT, LaplaceIID

  static NoiseKind student_t(double df) { return {Family::StudentT, df, 1.0, 1}; }
  static NoiseKind laplace(double b) { return {Family::Laplace, 0.0, b, 1}; }
  static NoiseKind multivariate_t(double df, std::size_t dim) { return {Family::MultivariateT, df, 1.0, dim}; }
  static NoiseKind laplace_iid(double b, std::size_t dim) { return {Family::LaplaceIID, 0.0, b, dim}; }
};

/// One of the seven synthetic benchmarks: y = f0(x) + s(x) * eps, x ~ U[0,1]^d.
struct Scenario {
  int id = 0;
  std::size_t input_dim = 0;
  std::size_t output_dim = 1;
  NoiseKind noise;

  bool multivariate() const noexcept { return output_dim > 1; }
};

/// Throws std::invalid_argument for ids outside 1..7.
const Scenario& scenario(int id);

/// f0(x). Throws ShapeError when x has the wrong dimension.
std::vector<double> location(int id, std::span<const double> x);
/// s(x): distance to (1/2, 1/2) for scenario 1, sqrt(x1 + x2/2) for scenario 3, else 1.
double scale(int id, std::span<const double> x);

/// tau-quantile of the (marginal) noise law. t(2) uses the closed form, other t laws CDF
/// bisection; multivariate laws return the quantile of one component.
double noise_quantile(const NoiseKind& kind, double tau);

/// f*_tau(x) = f0(x) + s(x) Q(tau); for multivariate scenarios the vector of marginal
/// tau-quantiles.
std::vector<double> true_quantile(int id, std::span<const double> x, double tau);
/// Row-wise true_quantile over a design matrix; shape (n, output_dim).
Matrix true_quantile_matrix(int id, const Matrix& x, double tau);

struct Dataset {
  Matrix x;  // n x d, entries in [0,1]
  Matrix y;  // n x p
  int scenario = 0;
  std::uint64_t seed = 0;
};

/// Draws n i.i.d. pairs. Deterministic in (id, n, seed).
Dataset generate(int id, std::size_t n, std::uint64_t seed);

/// CSV: a "# scenario=<id> seed=<s> n=<n>" line, a header x1..xd,y1..yp, one row per sample.
/// Values are written in shortest round-trip form.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
/// Accepts files with no y columns (prediction inputs). The metadata line is optional.
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace qrnn
