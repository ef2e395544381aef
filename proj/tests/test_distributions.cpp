// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/laplace.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "qrnn/distributions.hpp"
#include "qrnn/scenarios.hpp"

using namespace qrnn;

namespace {

const std::vector<double> kLevels{0.05, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 0.95};

}  // namespace

TEST_CASE("incomplete beta against an independent implementation") {
  for (double a : {0.5, 1.0, 1.5, 2.5, 7.0})
    for (double b : {0.5, 1.0, 3.0})
      for (double x : {0.0, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0})
        CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-12));
  // I_x(1, 3) = 1 - (1 - x)^3.
  CHECK(incomplete_beta(1.0, 3.0, 0.4) == doctest::Approx(0.784).epsilon(1e-14));
}

TEST_CASE("student t cdf against an independent implementation") {
  for (double df : {1.0, 2.0, 3.0, 10.0}) {
    const boost::math::students_t_distribution<double> dist(df);
    for (double t : {-50.0, -3.0, -0.7, 0.0, 0.2, 1.5, 4.0, 1e3}) {
      INFO("df=" << df << " t=" << t);
      CHECK(student_t_cdf(df, t) == doctest::Approx(boost::math::cdf(dist, t)).epsilon(1e-12));
    }
  }
  // Frozen reference values.
  CHECK(student_t_cdf(3.0, 1.5) == doctest::Approx(0.8847080673775886).epsilon(1e-13));
  CHECK(student_t_cdf(2.0, -0.7) == doctest::Approx(0.2781965123164327).epsilon(1e-13));
}

TEST_CASE("t(2) closed form agrees with bisection") {
  for (double tau : kLevels) {
    INFO("tau=" << tau);
    CHECK(std::abs(student_t2_quantile(tau) - student_t_quantile_bisect(2.0, tau)) < 1e-9);
  }
  CHECK(student_t2_quantile(0.95) == doctest::Approx(2.9199855803537242).epsilon(1e-13));
  CHECK(std::abs(student_t2_quantile(0.95) - 2.919986) < 5e-7);
}

TEST_CASE("t quantiles against an independent implementation") {
  for (double df : {2.0, 3.0}) {
    const boost::math::students_t_distribution<double> dist(df);
    for (double tau : kLevels) {
      INFO("df=" << df << " tau=" << tau);
      CHECK(std::abs(student_t_quantile_bisect(df, tau) - boost::math::quantile(dist, tau)) < 1e-9);
    }
  }
  CHECK(std::abs(student_t_quantile_bisect(3.0, 0.95) - 2.3533634348018264) < 1e-9);
  CHECK(std::abs(student_t_quantile_bisect(3.0, 0.95) - 2.353363) < 5e-7);
  CHECK(std::abs(student_t_quantile_bisect(3.0, 0.25) + 0.7648923284043453) < 1e-9);
}

TEST_CASE("bisection reaches the requested cdf tolerance") {
  for (double tau : kLevels) {
    const double q = student_t_quantile_bisect(3.0, tau);
    CHECK(std::abs(student_t_cdf(3.0, q) - tau) < 1e-12);
  }
}

TEST_CASE("laplace quantile and cdf") {
  CHECK(std::abs(laplace_quantile(2.0, 0.75) - 2.0 * std::log(2.0)) < 1e-12);
  CHECK(laplace_quantile(2.0, 0.75) == doctest::Approx(1.386294).epsilon(1e-6));
  CHECK(laplace_quantile(2.0, 0.5) == 0.0);
  const boost::math::laplace_distribution<double> dist(0.0, 2.0);
  for (double tau : kLevels) {
    CHECK(laplace_quantile(2.0, tau) == doctest::Approx(boost::math::quantile(dist, tau)).epsilon(1e-13));
    CHECK(laplace_cdf(2.0, laplace_quantile(2.0, tau)) == doctest::Approx(tau).epsilon(1e-13));
  }
}

TEST_CASE("symmetric noise quantiles") {
  const std::vector<NoiseKind> kinds{NoiseKind::student_t(2), NoiseKind::student_t(3), NoiseKind::laplace(2),
                                     NoiseKind::multivariate_t(3, 2), NoiseKind::laplace_iid(2, 2)};
  for (const NoiseKind& k : kinds) {
    CHECK(noise_quantile(k, 0.5) == 0.0);
    for (double tau : kLevels) CHECK(std::abs(noise_quantile(k, tau) + noise_quantile(k, 1.0 - tau)) < 1e-10);
    double prev = -1e300;
    for (double tau = 0.01; tau < 1.0; tau += 0.01) {
      const double q = noise_quantile(k, tau);
      CHECK(q > prev);
      prev = q;
    }
  }
  CHECK(noise_quantile(NoiseKind::student_t(3), 0.5) == 0.0);
  CHECK_THROWS(noise_quantile(NoiseKind::laplace(2), 0.0));
  CHECK_THROWS(noise_quantile(NoiseKind::laplace(2), 1.0));
}

TEST_CASE("empirical cdf of t(2) samples at the closed-form quantiles") {
  Rng rng(2024);
  const std::size_t n = 1000000;
  std::vector<double> draws(n);
  for (double& v : draws) v = sample_student_t(rng, 2.0);
  std::sort(draws.begin(), draws.end());
  for (double tau : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    const double q = student_t2_quantile(tau);
    const double ecdf = static_cast<double>(std::upper_bound(draws.begin(), draws.end(), q) - draws.begin()) / n;
    INFO("tau=" << tau << " ecdf=" << ecdf);
    CHECK(std::abs(ecdf - tau) <= 3.0 * std::sqrt(tau * (1.0 - tau) / n));
  }
}

TEST_CASE("laplace samples match the analytic quantiles") {
  Rng rng(7);
  const std::size_t n = 200000;
  std::vector<double> draws(n);
  for (double& v : draws) v = sample_laplace(rng, 2.0);
  std::sort(draws.begin(), draws.end());
  for (double tau : {0.1, 0.5, 0.75}) {
    const double ecdf =
        static_cast<double>(std::upper_bound(draws.begin(), draws.end(), laplace_quantile(2.0, tau)) - draws.begin()) /
        n;
    CHECK(std::abs(ecdf - tau) <= 4.0 * std::sqrt(tau * (1.0 - tau) / n));
  }
}
