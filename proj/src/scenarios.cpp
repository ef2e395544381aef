// SPDX-License-Identifier: Apache-2.0
#include "qrnn/scenarios.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "qrnn/distributions.hpp"
#include "qrnn/error.hpp"
#include "qrnn/losses.hpp"
#include "qrnn/rng.hpp"

namespace qrnn {

namespace {

const std::array<Scenario, 7> kScenarios = {{
    {1, 2, 1, NoiseKind::student_t(2.0)},
    {2, 2, 1, NoiseKind::laplace(2.0)},
    {3, 2, 1, NoiseKind::student_t(2.0)},
    {4, 5, 1, NoiseKind::laplace(2.0)},
    {5, 10, 1, NoiseKind::student_t(3.0)},
    {6, 2, 2, NoiseKind::multivariate_t(3.0, 2)},
    {7, 4, 2, NoiseKind::laplace_iid(2.0, 2)},
}};

void check_dim(int id, std::span<const double> x) {
  const Scenario& s = scenario(id);
  if (x.size() != s.input_dim)
    throw ShapeError("scenario " + std::to_string(id) + " takes " + std::to_string(s.input_dim) +
                     " covariates, got " + std::to_string(x.size()));
}

double checked_sqrt(double v, const char* where) {
  if (v < 0.0) throw DomainError(std::string(where) + ": negative argument under square root");
  return std::sqrt(v);
}

double scenario1(std::span<const double> q) {
  const double a = std::sqrt(q[0]) + q[0] * q[1];
  const double b = std::cos(2.0 * std::numbers::pi * q[1]);
  return checked_sqrt(a + b * b, "scenario 1") + a * a * b;
}

double scenario5(std::span<const double> q) {
  double total = 0.0, tail = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    total += q[j];
    if (j > 0) tail += q[j];
  }
  const double a = std::sqrt(q[0] * q[0] + tail);
  const double b = total * total * total;
  const double u = std::abs(a), v = b * a;
  return u + checked_sqrt(u + v, "scenario 5");
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) throw ParseError(where, "malformed number '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

}  // namespace

const Scenario& scenario(int id) {
  if (id < 1 || id > 7) throw std::invalid_argument("unknown scenario id " + std::to_string(id) + " (expected 1..7)");
  return kScenarios[static_cast<std::size_t>(id - 1)];
}

std::vector<double> location(int id, std::span<const double> x) {
  check_dim(id, x);
  switch (id) {
    case 1: return {scenario1(x)};
    case 2: return {x[0] * x[0] + x[1] * x[1]};
    case 3: return {std::sqrt(x[0] + x[1]) + (x[0] < 0.5 ? 1.0 : 0.0)};
    case 4: return {std::sqrt(x[0] + x[1] + x[2] + x[3] + x[4])};
    case 5: return {scenario5(x)};
    case 6: {
      const double u = std::abs(x[0]), v = x[1] * x[0];
      const double s = u + v;
      return {checked_sqrt(v * v + u, "scenario 6"), s * s * s};
    }
    case 7: return {std::sqrt(x[0] * x[0] + x[1] * x[1]), std::sqrt(x[2] * x[2] + x[3] * x[3])};
  }
  throw std::logic_error("location: unreachable");
}

double scale(int id, std::span<const double> x) {
  check_dim(id, x);
  if (id == 1) return std::hypot(x[0] - 0.5, x[1] - 0.5);
  if (id == 3) return std::sqrt(x[0] + 0.5 * x[1]);
  return 1.0;
}

double noise_quantile(const NoiseKind& kind, double tau) {
  check_tau(tau);
  switch (kind.family) {
    case NoiseKind::Family::StudentT:
    case NoiseKind::Family::MultivariateT:
      if (tau == 0.5) return 0.0;
      if (kind.df == 2.0) return student_t2_quantile(tau);
      // Symmetric law: solve in the lower tail and mirror, so Q(tau) = -Q(1 - tau) exactly.
      if (tau > 0.5) return -student_t_quantile_bisect(kind.df, 1.0 - tau);
      return student_t_quantile_bisect(kind.df, tau);
    case NoiseKind::Family::Laplace:
    case NoiseKind::Family::LaplaceIID:
      return laplace_quantile(kind.scale, tau);
  }
  throw std::logic_error("noise_quantile: unreachable");
}

std::vector<double> true_quantile(int id, std::span<const double> x, double tau) {
  const Scenario& s = scenario(id);
  std::vector<double> q = location(id, x);
  const double shift = scale(id, x) * noise_quantile(s.noise, tau);
  for (double& v : q) v += shift;
  return q;
}

Matrix true_quantile_matrix(int id, const Matrix& x, double tau) {
  const Scenario& s = scenario(id);
  Matrix out(x.rows(), s.output_dim);
  const double nq = noise_quantile(s.noise, tau);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto loc = location(id, x.row(i));
    const double shift = scale(id, x.row(i)) * nq;
    for (std::size_t j = 0; j < s.output_dim; ++j) out(i, j) = loc[j] + shift;
  }
  return out;
}

Dataset generate(int id, std::size_t n, std::uint64_t seed) {
  const Scenario& s = scenario(id);
  if (n == 0) throw std::invalid_argument("generate: n must be at least 1");
  Dataset data{Matrix(n, s.input_dim), Matrix(n, s.output_dim), id, seed};
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (double& v : data.x.values()) v = unif(rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = data.x.row(i);
    const auto loc = location(id, xi);
    const double sc = scale(id, xi);
    switch (s.noise.family) {
      case NoiseKind::Family::StudentT:
        data.y(i, 0) = loc[0] + sc * sample_student_t(rng, s.noise.df);
        break;
      case NoiseKind::Family::Laplace:
        data.y(i, 0) = loc[0] + sc * sample_laplace(rng, s.noise.scale);
        break;
      case NoiseKind::Family::MultivariateT: {
        // One chi-square draw shared by all components of the observation.
        std::vector<double> z(s.output_dim);
        for (double& zj : z) zj = normal(rng);
        std::chi_squared_distribution<double> chi2(s.noise.df);
        const double w = std::sqrt(chi2(rng) / s.noise.df);
        for (std::size_t j = 0; j < s.output_dim; ++j) data.y(i, j) = loc[j] + sc * z[j] / w;
        break;
      }
      case NoiseKind::Family::LaplaceIID:
        for (std::size_t j = 0; j < s.output_dim; ++j) data.y(i, j) = loc[j] + sc * sample_laplace(rng, s.noise.scale);
        break;
    }
  }
  return data;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "# scenario=" << data.scenario << " seed=" << data.seed << " n=" << data.x.rows() << '\n';
  std::string header;
  for (std::size_t j = 0; j < data.x.cols(); ++j) header += (j ? ",x" : "x") + std::to_string(j + 1);
  for (std::size_t j = 0; j < data.y.cols(); ++j) header += ",y" + std::to_string(j + 1);
  out << header << '\n';
  for (std::size_t i = 0; i < data.x.rows(); ++i) {
    std::string line;
    for (std::size_t j = 0; j < data.x.cols(); ++j) line += (j ? "," : "") + format_double(data.x(i, j));
    for (std::size_t j = 0; j < data.y.cols(); ++j) line += "," + format_double(data.y(i, j));
    out << line << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open data file " + path.string());
  const std::string file = path.string();
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        std::istringstream meta(line.substr(1));
        std::string kv;
        while (meta >> kv) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) continue;
          const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
          try {
            if (key == "scenario") data.scenario = std::stoi(val);
            if (key == "seed") data.seed = std::stoull(val);
          } catch (const std::exception&) {
            throw ParseError(file + ":" + std::to_string(line_no), "malformed metadata '" + kv + "'");
          }
        }
        continue;
      }
      return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError(file, "missing header");
  const auto header = split_csv(line);
  std::size_t d = 0, p = 0;
  for (const auto& h : header) {
    if (!h.empty() && h[0] == 'x' && p == 0)
      ++d;
    else if (!h.empty() && h[0] == 'y')
      ++p;
    else
      throw ParseError(file + ":" + std::to_string(line_no), "unexpected column '" + h + "'");
  }
  if (d == 0) throw ParseError(file + ":" + std::to_string(line_no), "no x columns");

  std::vector<double> xs, ys;
  std::size_t n = 0;
  while (next_line()) {
    const auto cells = split_csv(line);
    const std::string where = file + ":" + std::to_string(line_no);
    if (cells.size() != d + p)
      throw ParseError(where, "expected " + std::to_string(d + p) + " fields, found " + std::to_string(cells.size()));
    for (std::size_t j = 0; j < d; ++j) xs.push_back(parse_double(cells[j], where));
    for (std::size_t j = 0; j < p; ++j) ys.push_back(parse_double(cells[d + j], where));
    ++n;
  }
  data.x = Matrix(n, d);
  data.y = Matrix(n, p);
  std::copy(xs.begin(), xs.end(), data.x.data());
  std::copy(ys.begin(), ys.end(), data.y.data());
  return data;
}

}  // namespace qrnn
