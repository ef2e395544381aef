// SPDX-License-Identifier: Apache-2.0
#include "qrnn/distributions.hpp"

#include <cmath>
#include <limits>

#include "qrnn/error.hpp"
#include "qrnn/losses.hpp"

namespace qrnn {

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete_beta: x must lie in [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double df, double t) {
  if (!(df > 0.0)) throw DomainError("student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile_bisect(double df, double tau, double tol) {
  check_tau(tau);
  double lo = -1e6, hi = 1e6;
  double mid = 0.0;
  for (int it = 0; it < 2000; ++it) {
    mid = 0.5 * (lo + hi);
    const double f = student_t_cdf(df, mid) - tau;
    if (std::abs(f) < tol) break;
    if (f < 0.0)
      lo = mid;
    else
      hi = mid;
    if (!(hi - lo > std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid)))) break;
  }
  return mid;
}

double student_t2_quantile(double tau) {
  check_tau(tau);
  return (2.0 * tau - 1.0) / std::sqrt(2.0 * tau * (1.0 - tau));
}

double laplace_quantile(double b, double tau) {
  check_tau(tau);
  if (!(b > 0.0)) throw DomainError("laplace_quantile: scale must be positive");
  return tau < 0.5 ? b * std::log(2.0 * tau) : -b * std::log(2.0 * (1.0 - tau));
}

double laplace_cdf(double b, double x) {
  return x < 0.0 ? 0.5 * std::exp(x / b) : 1.0 - 0.5 * std::exp(-x / b);
}

double sample_student_t(Rng& rng, double df) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi2(df);
  const double z = normal(rng);
  return z / std::sqrt(chi2(rng) / df);
}

double sample_laplace(Rng& rng, double b) {
  const double u = uniform_open(rng);
  return u < 0.5 ? b * std::log(2.0 * u) : -b * std::log(2.0 * (1.0 - u));
}

}  // namespace qrnn
