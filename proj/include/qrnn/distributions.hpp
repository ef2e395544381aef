// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "qrnn/rng.hpp"

namespace qrnn {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// CDF of Student's t with `df` degrees of freedom, via I_{df/(df+t^2)}(df/2, 1/2).
double student_t_cdf(double df, double t);

/// Inverts student_t_cdf by bisection on [-1e6, 1e6] until |F(q) - tau| < tol.
double student_t_quantile_bisect(double df, double tau, double tol = 1e-12);

/// Closed-form t(2) quantile: (2 tau - 1) / sqrt(2 tau (1 - tau)).
double student_t2_quantile(double tau);

/// Laplace(0, b): b ln(2 tau) below the median, -b ln(2 (1 - tau)) above.
double laplace_quantile(double b, double tau);
double laplace_cdf(double b, double x);

/// z / sqrt(chi2_df / df) with z standard normal.
double sample_student_t(Rng& rng, double df);
/// Inverse-CDF sampling of Laplace(0, b).
double sample_laplace(Rng& rng, double b);

}  // namespace qrnn
