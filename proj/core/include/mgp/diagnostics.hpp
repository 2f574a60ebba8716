#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mgp/dgp.hpp"
#include "mgp/engine.hpp"
#include "mgp/rules.hpp"

namespace mgp {

/// Mean over trajectories of |theta(F_n) - theta(F_m)|_1 / p at every checkpoint m.
struct TraceSeries {
    std::vector<std::size_t> steps;
    std::vector<double> mean;
    std::vector<std::vector<double>> per_trajectory;  // trajectory-major, failed ones omitted
    std::vector<std::size_t> trajectory_ids;
};

/// Needs draws produced with keep_checkpoints.
TraceSeries l1_trace(const PosteriorDraws& draws, const Eigen::VectorXd& theta_data);

/// Least-squares slope of values against steps over [begin, end).
double series_slope(std::span<const std::size_t> steps, std::span<const double> values, std::size_t begin,
                    std::size_t end);

struct TraceStability {
    double first_slope = 0.0;  // over the first quarter of checkpoints
    double last_slope = 0.0;   // over the last quarter
    bool stabilized = false;   // |last| < ratio * |first|
};

TraceStability trace_stability(const TraceSeries& series, double ratio = 0.1);

/// Per-step L1 gap sum_y |E[p_{i+1}(y | x*)] - p_i(y | x*)| for i = n..N with
/// all future covariates fixed at x*, and its running sum.
struct AcidSeries {
    std::vector<std::size_t> steps;
    std::vector<double> terms;
    std::vector<double> standard_errors;
    std::vector<double> cumulative;
};

/// `rule` must be conditioned on the data (step n) and predict a categorical
/// distribution at x*. The expectation uses M clones per step, each advancing
/// once from the current state; the main path then advances once.
AcidSeries acid_cumsum(const PredictiveRule& rule, std::span<const double> x_star, std::size_t horizon,
                       std::size_t mc_draws, std::uint64_t seed, std::size_t workers = 1);

struct ConcentrationPoint {
    std::size_t n = 0;
    Eigen::MatrixXd draws;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;  // empty when fewer than two usable draws
};

/// Posterior draws for increasing sample sizes from one synthetic setup.
std::vector<ConcentrationPoint> concentration_sweep(const SyntheticSetup& setup, const RuleConfig& rule,
                                                    std::span<const std::size_t> sizes, std::size_t forward_steps,
                                                    std::size_t draws, std::uint64_t seed, std::size_t workers = 1);

void write_trace_csv(const std::filesystem::path& path, const TraceSeries& series);
void write_acid_csv(const std::filesystem::path& path, const AcidSeries& series);

}  // namespace mgp
