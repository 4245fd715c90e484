// Special functions and quantiles behind the t-based intervals.

#pragma once

namespace fewmeta {

/// Regularized incomplete beta I_x(a, b), a, b > 0, 0 <= x <= 1.
double incomplete_beta(double a, double b, double x);

double normal_cdf(double z);
/// Standard normal quantile (Wichura AS 241, ~1e-16 relative accuracy).
double normal_quantile(double p);

double student_t_cdf(double t, double df);
/// Upper tail P(T > t), accurate far into the tail.
double student_t_upper_tail(double t, double df);

/// Central Student-t quantile, found by inverting the incomplete beta
/// representation of the cdf; absolute error below 1e-10 for |t| < 1e4.
double t_quantile(int df, double p);

}  // namespace fewmeta
