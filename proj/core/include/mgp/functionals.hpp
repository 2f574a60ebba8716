#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgp/dataset.hpp"

namespace mgp {

enum class LossKind { squared_error, multinomial_nll };

/// The loss defining the risk minimizer theta(F), restricted to the active
/// design columns. For multinomial NLL the first class's coefficients are fixed
/// at zero and not part of theta.
struct LossSpec {
    LossKind kind = LossKind::squared_error;
    std::size_t num_classes = 0;
    std::vector<bool> active;  // one flag per design column, intercept included
    double damping = 1e-8;     // ridge term (eps/2)|theta|^2, logistic only

    /// Squared error for a continuous design, multinomial NLL otherwise.
    static LossSpec for_design(const DesignMatrix& design, std::vector<bool> active, double damping = 1e-8);

    std::size_t active_columns() const noexcept;
    /// dim(theta).
    std::size_t dim() const noexcept;
    /// Human-readable coordinate names for theta.
    std::vector<std::string> coordinate_names(const std::vector<std::string>& column_names) const;
    void validate(const DesignMatrix& design) const;
};

struct FitResult {
    Eigen::VectorXd theta;
    bool converged = false;
    double gradient_norm = 0.0;
    int iterations = 0;
};

/// Condition number (largest over smallest singular value) of the masked design.
double condition_number(const RowMatrix& x, const std::vector<bool>& active);

/// Removes near-collinear columns one at a time: while the masked design's
/// condition number exceeds the threshold, drop the non-intercept column with
/// the largest absolute loading on the smallest principal component.
std::vector<bool> prune_collinear(const RowMatrix& x, double condition_threshold = 1e8);

/// Least squares on the active columns via column-pivoted QR. Weights act as
/// row multiplicities; an empty span means unit weights.
FitResult fit_linear(const RowMatrix& x, const Eigen::VectorXd& y, const std::vector<bool>& active,
                     std::span<const double> weights = {});

struct LogisticOptions {
    double damping = 1e-8;
    int max_iterations = 200;
    double tolerance = 1e-8;
    const Eigen::VectorXd* warm_start = nullptr;
};

/// Multinomial logistic regression by damped Newton with Armijo backtracking.
/// Labels are 0..K-1 stored as doubles; theta is class-major over classes 1..K-1.
FitResult fit_logistic(const RowMatrix& x, const Eigen::VectorXd& labels, std::size_t num_classes,
                       const std::vector<bool>& active, const LogisticOptions& options = {},
                       std::span<const double> weights = {});

/// Objective value and gradient of the (damped) multinomial NLL, exposed for
/// derivative checks.
double logistic_objective(const RowMatrix& x, const Eigen::VectorXd& labels, std::size_t num_classes,
                          const std::vector<bool>& active, const Eigen::VectorXd& theta, double damping,
                          Eigen::VectorXd* gradient = nullptr, std::span<const double> weights = {});

/// Dispatches on the loss kind.
FitResult fit(const LossSpec& loss, const RowMatrix& x, const Eigen::VectorXd& y,
              std::span<const double> weights = {}, const Eigen::VectorXd* warm_start = nullptr);

/// Class probabilities at one design row (intercept first) for a class-major theta.
Eigen::VectorXd softmax_probabilities(std::span<const double> design_row, const std::vector<bool>& active,
                                      std::size_t num_classes, const Eigen::VectorXd& theta);

}  // namespace mgp
