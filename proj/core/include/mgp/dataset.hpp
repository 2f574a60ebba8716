#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgp/rng.hpp"

namespace mgp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ColumnKind { continuous, categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    // Categorical level set. With infer_levels the loader fills it in first
    // appearance order; otherwise it is closed and unknown values are errors.
    std::vector<std::string> levels;
    bool infer_levels = true;
};

struct Schema {
    std::vector<ColumnSpec> features;
    ColumnSpec response;
};

/// Observed rows z_1..z_n: features (continuous values, or level indices into the
/// schema's level set for categorical columns) and a response of the same kind.
class Dataset {
public:
    Dataset(Schema schema, std::vector<double> features, std::vector<double> response);

    std::size_t size() const noexcept { return response_.size(); }
    std::size_t num_features() const noexcept { return schema_.features.size(); }
    const Schema& schema() const noexcept { return schema_; }

    std::span<const double> row(std::size_t i) const {
        return {features_.data() + i * num_features(), num_features()};
    }
    double feature(std::size_t i, std::size_t col) const { return features_[i * num_features() + col]; }
    double response(std::size_t i) const { return response_[i]; }
    std::span<const double> responses() const noexcept { return response_; }

    bool categorical_response() const noexcept { return schema_.response.kind == ColumnKind::categorical; }
    /// K for a categorical response, 0 for a continuous one.
    std::size_t num_classes() const noexcept;

    /// Rows in the given order; the schema (and its level sets) is kept.
    Dataset subset(std::span<const std::size_t> rows) const;

    /// Index of a feature column, or num_features() for the response; throws if unknown.
    std::size_t column_index(const std::string& name) const;

private:
    Schema schema_;
    std::vector<double> features_;
    std::vector<double> response_;
};

/// Reads a comma-separated file with a header row. Every schema column must
/// appear in the header; other columns are ignored. Missing values are errors.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema);

struct ColumnTransform {
    ColumnKind kind = ColumnKind::continuous;
    double mean = 0.0;
    double sd = 1.0;
    // Categorical: encoding order. Position 0 is the dropped reference level.
    std::vector<std::string> levels;
};

struct StandardizationParams {
    std::vector<ColumnTransform> features;
    ColumnTransform response;
};

/// Population (divide-by-n) moments for continuous columns and first-appearance
/// level ordering for categorical ones.
StandardizationParams fit_standardization(const Dataset& population);

/// Intercept-first design [1 x] with standardized continuous columns and
/// (levels - 1) indicator columns per categorical feature.
struct DesignMatrix {
    RowMatrix x;
    // Standardized continuous response, or class labels 0..K-1 stored as doubles.
    Eigen::VectorXd y;
    std::vector<std::string> column_names;
    std::size_t num_classes = 0;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(x.rows()); }
    std::size_t cols() const noexcept { return static_cast<std::size_t>(x.cols()); }
    /// Features of row i without the intercept.
    std::span<const double> features(std::size_t i) const {
        return {x.row(static_cast<Eigen::Index>(i)).data() + 1, cols() - 1};
    }
    bool categorical() const noexcept { return num_classes > 0; }
};

DesignMatrix encode(const Dataset& dataset, const StandardizationParams& params);

struct StratumSpec {
    std::string column;  // feature or response name
    // 0: stratify on exact values (categorical levels, low-cardinality numbers).
    // >0: equal-count quantile bins of a numeric column.
    std::size_t bins = 0;
};

/// Quantile bin of every value: boundaries are the order statistics at ranks
/// ceil(k n / bins), k = 1..bins-1, and a value equal to a boundary goes to the
/// lower bin.
std::vector<std::size_t> quantile_bins(std::span<const double> values, std::size_t bins);

/// Draws n_train rows without replacement, allocating rows to strata in
/// proportion to their population share (largest remainder). Rows come back in
/// ascending population order.
Dataset stratified_split(const Dataset& dataset, std::size_t n_train, const std::vector<StratumSpec>& strata,
                         RngStream& rng);

}  // namespace mgp
