// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "qrnn/matrix.hpp"
#include "qrnn/rng.hpp"

using qrnn::Matrix;

namespace {

Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix random_matrix(std::size_t r, std::size_t c, qrnn::Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

}  // namespace

TEST_CASE("matrix construction and element access") {
  Matrix m(2, 3, 1.5);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.size() == 6);
  CHECK(m(1, 2) == 1.5);
  m(0, 1) = 4.0;
  CHECK(m.row(0)[1] == 4.0);
  CHECK(m.data()[1] == 4.0);

  const Matrix r = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  CHECK(r.rows() == 3);
  CHECK(r(2, 1) == 6.0);
  CHECK(r.col_values(0) == std::vector<double>{1, 3, 5});

  CHECK(Matrix().empty());
  CHECK_THROWS(Matrix::from_rows({{1, 2}, {3}}));
}

TEST_CASE("storage is 64-byte aligned") {
  for (std::size_t n : {1u, 3u, 7u, 65u}) {
    const Matrix m(n, 3);
    CHECK(reinterpret_cast<std::uintptr_t>(m.data()) % 64 == 0);
  }
}

TEST_CASE("finite check and gather") {
  Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(m.all_finite());
  m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(m.all_finite());
  m(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(m.all_finite());

  const Matrix g = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::size_t> idx{2, 0, 2};
  CHECK(g.gather_rows(idx) == Matrix::from_rows({{5, 6}, {1, 2}, {5, 6}}));
}

TEST_CASE("products agree with a triple loop") {
  qrnn::Rng rng(3);
  for (auto [m, k, n] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {2, 3, 4}, {7, 13, 5}, {64, 200, 33}}) {
    const Matrix a = random_matrix(m, k, rng);
    const Matrix b = random_matrix(k, n, rng);
    const Matrix ref = naive_product(a, b);
    const Matrix nn = qrnn::matmul_nn(a, b);
    const Matrix nt = qrnn::matmul_nt(a, transpose(b));
    const Matrix tn = qrnn::matmul_tn(transpose(a), b);
    REQUIRE(nn.same_shape(ref));
    REQUIRE(nt.same_shape(ref));
    REQUIRE(tn.same_shape(ref));
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(nn.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
      CHECK(nt.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
      CHECK(tn.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("products reject mismatched shapes") {
  CHECK_THROWS(qrnn::matmul_nn(Matrix(2, 3), Matrix(2, 3)));
  CHECK_THROWS(qrnn::matmul_nt(Matrix(2, 3), Matrix(2, 4)));
  CHECK_THROWS(qrnn::matmul_tn(Matrix(2, 3), Matrix(3, 3)));
}

TEST_CASE("products are bit-reproducible") {
  qrnn::Rng rng(9);
  const Matrix a = random_matrix(37, 200, rng);
  const Matrix b = random_matrix(200, 200, rng);
  CHECK(qrnn::matmul_nt(a, b) == qrnn::matmul_nt(a, b));
  CHECK(qrnn::matmul_tn(b, b) == qrnn::matmul_tn(b, b));
}

TEST_CASE("seed mixing helpers") {
  static_assert(qrnn::fnv1a("") == 0xcbf29ce484222325ULL);
  // Published FNV-1a test vector.
  CHECK(qrnn::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  // Reference splitmix64 output for state 0 (first draw of the canonical generator).
  CHECK(qrnn::splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(qrnn::hash_keys(1, 2) != qrnn::hash_keys(2, 1));
  qrnn::Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = qrnn::uniform_open(rng);
    CHECK((u > 0.0 && u < 1.0));
  }
}
