#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgp/dataset.hpp"
#include "mgp/functionals.hpp"
#include "mgp/rng.hpp"
#include "mgp/rules.hpp"

namespace mgp {

struct EngineConfig {
    /// N - n. Unset: the rule kind's default.
    std::optional<std::size_t> forward_steps;
    std::size_t draws = 100;  // L
    /// Checkpoint every `stride` steps from n; 0 keeps only m = N.
    std::size_t checkpoint_stride = 0;
    std::vector<std::size_t> extra_checkpoints;  // absolute steps m in [n, N]
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    bool keep_checkpoints = false;
    bool keep_pairs = false;
    /// Draws per original feature row in the predictive-refit functional.
    std::size_t refit_repeats = 5;
};

struct Checkpoint {
    std::size_t step = 0;
    Eigen::VectorXd theta;
    bool converged = false;
};

/// One forward-sampled augmentation z_{n+1:N}. Generated features are always
/// copies of original rows and are stored as original-row indices.
struct Trajectory {
    std::size_t index = 0;
    std::vector<std::size_t> rows;
    std::vector<double> responses;  // NaN where the rule never materialized y
    std::vector<Checkpoint> checkpoints;
    Eigen::VectorXd theta;
    bool converged = false;
    bool failed = false;
    std::string error;
};

struct PosteriorDraws {
    Eigen::MatrixXd draws;  // L x p, NaN rows for failed trajectories
    std::vector<bool> converged;
    std::vector<bool> failed;
    std::vector<std::string> errors;
    std::vector<std::string> coordinate_names;
    RuleKind rule = RuleKind::bayesian_bootstrap;
    std::size_t n = 0;
    std::size_t depth = 0;  // N
    std::uint64_t seed = 0;
    Eigen::VectorXd theta_data;  // theta(F_n)
    std::vector<Trajectory> trajectories;

    std::size_t size() const noexcept { return static_cast<std::size_t>(draws.rows()); }
    std::size_t failed_count() const noexcept;
    std::size_t nonconverged_count() const noexcept;
    /// Rows that neither failed nor stopped short of the optimizer tolerance.
    Eigen::MatrixXd usable() const;
};

/// Uniform index into the current pool.
std::size_t feature_pool_sample(std::span<const std::size_t> pool, RngStream& rng);

/// Sorted checkpoint steps: n, n + stride, ..., the extras, and always N.
std::vector<std::size_t> checkpoint_steps(std::size_t n, std::size_t depth, std::size_t stride,
                                          std::span<const std::size_t> extra = {});

/// Predictive resampling. `rule` must already be conditioned on every row of
/// `data`; each trajectory works on its own clone with RngStream(seed, l).
PosteriorDraws run_mgp(const DesignMatrix& data, const PredictiveRule& rule, const LossSpec& loss,
                       const EngineConfig& config);

/// Builds the rule from its config and runs it.
PosteriorDraws run_mgp(const DesignMatrix& data, const RuleConfig& rule, const LossSpec& loss,
                       const EngineConfig& config);

/// Columns: trajectory, theta coordinates..., converged, failed.
void write_draws_csv(const std::filesystem::path& path, const PosteriorDraws& draws);
/// Columns: trajectory, step, x features..., y. Needs keep_pairs.
void write_trajectories_csv(const std::filesystem::path& path, const PosteriorDraws& draws, const DesignMatrix& data);

}  // namespace mgp
