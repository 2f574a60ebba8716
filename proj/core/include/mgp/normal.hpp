#pragma once

namespace mgp::normal {

/// Arguments to quantile() are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-10;

double pdf(double z) noexcept;
double cdf(double z) noexcept;
/// Standard normal quantile of a clamped probability.
double quantile(double p) noexcept;
double clamp_prob(double p) noexcept;

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation r.
/// Drezner-Wesolowsky Gauss-Legendre scheme as refined by Genz; absolute
/// error below 1e-14 over the whole parameter range.
double bivariate_cdf(double h, double k, double r) noexcept;

}  // namespace mgp::normal

namespace mgp::gaussian_copula {

/// Copula density c_rho(u, v) on the normal-score scale: a = Phi^-1(u),
/// b = Phi^-1(v). Taking scores directly avoids two quantile evaluations when
/// the caller already has them (standardized features are scores).
double density_scores(double a, double b, double rho) noexcept;
double density(double u, double v, double rho) noexcept;

/// Conditional distribution h_rho(u | v) = Phi((Phi^-1(u) - rho Phi^-1(v)) / sqrt(1 - rho^2)).
double h_function(double u, double v, double rho) noexcept;

/// Copula distribution function C_rho(u, v).
double cdf(double u, double v, double rho) noexcept;

}  // namespace mgp::gaussian_copula
