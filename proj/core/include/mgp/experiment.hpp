#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgp/dataset.hpp"
#include "mgp/dgp.hpp"
#include "mgp/diagnostics.hpp"
#include "mgp/engine.hpp"
#include "mgp/rules.hpp"
#include "mgp/uq.hpp"

namespace mgp {

struct SetupConfig {
    std::string name;
    bool synthetic = true;
    SyntheticSetup synthetic_setup;
    bool beta_given = false;
    // tabular file setups
    std::filesystem::path path;
    Schema schema;
    std::size_t n_train = 0;
    std::vector<StratumSpec> strata;
};

struct TraceSpec {
    std::string setup;
    std::string rule;
    std::size_t draws = 20;
    std::size_t checkpoint_stride = 50;
    std::optional<std::size_t> forward_steps;
    double ratio = 0.1;
};

struct AcidSpec {
    std::string setup;
    std::string rule;
    std::optional<std::vector<double>> x_star;  // default: all-zero features
    std::size_t horizon_steps = 100;
    std::size_t mc_draws = 500;
};

struct ConcentrationSpec {
    std::string setup;
    std::string rule;
    std::vector<std::size_t> sizes;
    std::size_t forward_steps = 500;
    std::size_t draws = 100;
};

struct ExperimentConfig {
    std::string name;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::size_t repetitions = 100;
    std::size_t workers = 1;
    std::filesystem::path output_dir = "out";
    std::optional<std::size_t> forward_steps;
    std::size_t draws = 100;
    std::size_t checkpoint_stride = 0;
    std::size_t refit_repeats = 5;
    bool save_draws = false;
    CutoffMode cutoff = CutoffMode::empirical;
    double condition_threshold = 1e8;
    double damping = 1e-8;
    std::vector<SetupConfig> setups;
    std::vector<RuleConfig> rules;
    std::vector<TraceSpec> traces;
    std::vector<AcidSpec> acids;
    std::vector<ConcentrationSpec> concentrations;
    /// Canonical JSON of the settings that determine results (no workers or
    /// output location).
    std::string canonical;

    std::string hash() const;
    std::string run_id() const;
};

/// Parses and validates; relative file paths resolve against base_dir.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::filesystem::path> output_dir;
};

/// Applies overrides and recomputes the canonical form.
ExperimentConfig apply_overrides(ExperimentConfig config, const RunOptions& options);

/// A setup made ready for repetitions: encoding, loss and theta(F_0).
struct PreparedSetup {
    SetupConfig config;
    StandardizationParams params;
    LossSpec loss;
    Eigen::VectorXd theta0;
    std::vector<std::string> coordinates;
    std::optional<Dataset> population;
    std::size_t num_classes = 0;

    /// Training design of one repetition.
    DesignMatrix repetition_data(std::uint64_t master_seed, std::size_t setup_index, std::size_t rep) const;
};

PreparedSetup prepare_setup(const ExperimentConfig& config, std::size_t index);

struct ResultRow {
    std::string setup;
    std::string rule;
    std::size_t repetitions = 0;  // repetitions with a valid credible set
    std::size_t invalid_repetitions = 0;
    std::size_t p = 0;
    double coverage = 0.0;
    double size_median = 0.0;
    std::vector<double> marginal_coverage;
    std::vector<double> winkler_median;
    std::size_t failed_trajectories = 0;
    std::size_t nonconverged_draws = 0;
    std::vector<std::string> coordinates;
};

struct ExperimentResult {
    std::filesystem::path run_dir;
    std::vector<ResultRow> rows;
    std::vector<PreparedSetup> setups;
};

/// Coverage study over every setup x rule pair; writes manifest.json,
/// results.csv, marginals.csv, table.txt, schema.json and optional draws.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct DiagnosticsResult {
    std::filesystem::path run_dir;
    std::vector<std::pair<std::string, TraceStability>> traces;
    std::vector<std::pair<std::string, double>> acid_final;  // final cumulative value
};

DiagnosticsResult run_diagnostics(const ExperimentConfig& config);

/// theta(F_0) per setup as JSON {setup: {coordinates, theta}}.
nlohmann::json theta0_report(const ExperimentConfig& config);

/// Checks every setup x rule pair is computable before any work starts.
void check_compatibility(const ExperimentConfig& config);

}  // namespace mgp
