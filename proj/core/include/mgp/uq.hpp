#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mgp {

enum class CutoffMode {
    empirical,   // order statistic of the draws' own Mahalanobis distances
    chi_squared  // chi^2_{p, 1-alpha} quantile
};

/// Axis-aligned ellipsoid {theta : sum_j (theta_j - center_j)^2 / scale_j <= radius2}.
struct CredibleEllipsoid {
    Eigen::VectorXd center;
    Eigen::VectorXd scale;  // per-coordinate variances
    double radius2 = 0.0;
    double level = 0.95;

    double mahalanobis2(const Eigen::VectorXd& theta) const;
    /// Boundary inclusive.
    bool contains(const Eigen::VectorXd& theta) const;
};

struct MarginalInterval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;

    bool contains(double v) const noexcept { return lower <= v && v <= upper; }
    double width() const noexcept { return upper - lower; }
};

/// Rows of `draws` are posterior samples. Mean and unbiased variance give the
/// center and scale; the empirical radius is the ceil((1 - alpha) L)-th
/// smallest squared Mahalanobis distance among the draws.
CredibleEllipsoid joint_credible_set(const Eigen::MatrixXd& draws, double alpha,
                                     CutoffMode mode = CutoffMode::empirical);

bool contains(const CredibleEllipsoid& set, const Eigen::VectorXd& theta);

/// Type-7 (linear interpolation) sample quantile, p in [0, 1].
double sample_quantile(std::vector<double> values, double p);

MarginalInterval marginal_interval(const Eigen::MatrixXd& draws, std::size_t coordinate, double alpha);

/// Width plus (2/alpha) times the distance by which the interval misses.
double winkler_score(const MarginalInterval& interval, double truth, double alpha);

double coverage(std::span<const CredibleEllipsoid> sets, const Eigen::VectorXd& truth);

/// Trace of the unbiased sample covariance.
double size_metric(const Eigen::MatrixXd& draws);

/// Per-coordinate unbiased variances.
Eigen::VectorXd sample_variances(const Eigen::MatrixXd& draws);

double median(std::vector<double> values);

}  // namespace mgp
