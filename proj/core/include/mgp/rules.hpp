#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mgp/dataset.hpp"
#include "mgp/distribution.hpp"
#include "mgp/functionals.hpp"
#include "mgp/rng.hpp"

namespace mgp {

enum class RuleKind {
    bayesian_bootstrap,
    copula,
    plugin,
    conjugate,
    external,
    mock_constant,
    mock_drifting,
    mock_polya,
};

std::string_view to_string(RuleKind kind) noexcept;
RuleKind parse_rule_kind(std::string_view name);

/// How the engine turns a forward-sampled trajectory into theta.
enum class FunctionalMode {
    augmented_sample,  // minimize the loss over original plus generated rows
    pooled_counts,     // weighted fit over original rows by resampling multiplicity
    predictive_refit,  // refit on 5n draws from P_N at the original features
};

/// Original-row index of a query point, when the caller knows it. Rules that
/// cache per-row quantities use it to skip a lookup.
inline constexpr std::size_t kNoAnchor = std::numeric_limits<std::size_t>::max();

/// One-step-ahead predictive rule P_i( . | z_{1:i}). Feature vectors are
/// standardized design rows without the intercept. Continuous responses are on
/// the standardized scale; categorical responses are class indices as doubles.
class PredictiveRule {
public:
    virtual ~PredictiveRule() = default;

    virtual std::unique_ptr<PredictiveRule> clone() const = 0;
    virtual RuleKind kind() const noexcept = 0;
    virtual FunctionalMode functional_mode() const noexcept { return FunctionalMode::augmented_sample; }

    /// Number of absorbed observations i.
    std::size_t step() const noexcept { return step_; }

    /// Explicit predictive distribution at x, if the rule has one.
    virtual std::optional<PredictedDistribution> predict(std::span<const double> x,
                                                         std::size_t anchor = kNoAnchor) const;

    /// Inverse-CDF draw from P_i( . | x) at a given uniform.
    virtual double draw_with_uniform(std::span<const double> x, double u, std::size_t anchor = kNoAnchor) const;

    double sample(std::span<const double> x, RngStream& rng, std::size_t anchor = kNoAnchor) const {
        return draw_with_uniform(x, rng.uniform_open(), anchor);
    }

    /// Absorb one observation: P_i -> P_{i+1}.
    void update(std::span<const double> x, double y, std::size_t anchor = kNoAnchor) {
        absorb(x, y, anchor);
        ++step_;
    }

    /// Sample y from P_i at x and absorb it. Rules whose state does not need the
    /// realized y may skip computing it when need_response is false, returning NaN.
    double advance(std::span<const double> x, RngStream& rng, bool need_response = true,
                   std::size_t anchor = kNoAnchor) {
        const double y = forward(x, rng, need_response, anchor);
        ++step_;
        return y;
    }

protected:
    PredictiveRule() = default;
    PredictiveRule(const PredictiveRule&) = default;
    PredictiveRule& operator=(const PredictiveRule&) = default;

    virtual void absorb(std::span<const double> x, double y, std::size_t anchor) = 0;
    virtual double forward(std::span<const double> x, RngStream& rng, bool need_response, std::size_t anchor);

    void count_step() noexcept { ++step_; }

private:
    std::size_t step_ = 0;
};

/// Joint empirical resampling: the next pair is a uniform draw from the pool of
/// previous pairs. Pool entries are original-row indices.
class BayesianBootstrapRule final : public PredictiveRule {
public:
    explicit BayesianBootstrapRule(std::size_t rows);

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::bayesian_bootstrap; }
    FunctionalMode functional_mode() const noexcept override { return FunctionalMode::pooled_counts; }

    /// Pair-coupled rule: pointwise sampling is an error.
    double draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const override;

    std::size_t sample_row(RngStream& rng) const;
    void update_row(std::size_t row);

    const std::vector<std::size_t>& pool() const noexcept { return pool_; }
    /// Multiplicity of every original row in the pool.
    std::vector<double> counts(std::size_t rows) const;

protected:
    void absorb(std::span<const double> x, double y, std::size_t anchor) override;

private:
    std::vector<std::size_t> pool_;
};

enum class PluginModel { automatic, gaussian_linear, logistic };

/// Z_{i+1} ~ p( . | theta_hat_i) with theta_hat_i the loss minimizer of all
/// absorbed rows; refit after every update.
class PluginRule final : public PredictiveRule {
public:
    PluginRule(PluginModel model, const LossSpec& loss, const DesignMatrix& data);

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::plugin; }

    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;
    double draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const override;

    const Eigen::VectorXd& theta() const noexcept { return theta_; }
    bool converged() const noexcept { return converged_; }

protected:
    void absorb(std::span<const double> x, double y, std::size_t anchor) override;

private:
    Eigen::VectorXd active_row(std::span<const double> x) const;
    void refit();

    PluginModel model_;
    std::vector<bool> active_;
    std::size_t num_classes_;
    double damping_;
    Eigen::VectorXd theta_;
    bool converged_ = true;
    // gaussian-linear sufficient statistics
    Eigen::MatrixXd gram_;
    Eigen::VectorXd moment_;
    // logistic rows (active columns only, intercept included)
    std::vector<double> rows_;
    std::vector<double> labels_;
};

/// Intercept-only normal model with known noise variance and a normal prior on
/// the mean; predictive is the exact posterior predictive.
class ConjugateNormalRule final : public PredictiveRule {
public:
    ConjugateNormalRule(double prior_mean, double prior_variance, double noise_variance);

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::conjugate; }

    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;
    double draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const override;

    double posterior_mean() const noexcept { return mean_; }
    double posterior_variance() const noexcept { return variance_; }
    double predictive_variance() const noexcept { return variance_ + noise_variance_; }

protected:
    void absorb(std::span<const double> x, double y, std::size_t anchor) override;

private:
    double mean_;
    double variance_;
    double noise_variance_;
};

/// Fixed categorical distribution that ignores updates.
class ConstantCategoricalRule final : public PredictiveRule {
public:
    explicit ConstantCategoricalRule(std::vector<double> probs);

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::mock_constant; }
    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;

protected:
    void absorb(std::span<const double>, double, std::size_t) override {}

private:
    std::vector<double> probs_;
};

/// Binary rule with p_i(1) = 0.5 + 1/(i + 2), ignoring the data.
class DriftingBinaryRule final : public PredictiveRule {
public:
    DriftingBinaryRule() = default;

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::mock_drifting; }
    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;

protected:
    void absorb(std::span<const double>, double, std::size_t) override {}
};

/// Binary Polya urn: p_{i+1}(1) = (i p_i(1) + y) / (i + 1).
class PolyaUrnRule final : public PredictiveRule {
public:
    PolyaUrnRule() = default;

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::mock_polya; }
    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;

protected:
    void absorb(std::span<const double> x, double y, std::size_t anchor) override;

private:
    double ones_ = 0.0;
    double total_ = 0.0;
};

/// Categorical view {y <= threshold, y > threshold} of a continuous rule.
/// Sampling and updates act on the wrapped rule's continuous response.
class BinarizedRule final : public PredictiveRule {
public:
    BinarizedRule(std::unique_ptr<PredictiveRule> inner, double threshold);

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return inner_->kind(); }
    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;
    double draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const override;

    const PredictiveRule& inner() const noexcept { return *inner_; }

protected:
    void absorb(std::span<const double> x, double y, std::size_t anchor) override;
    double forward(std::span<const double> x, RngStream& rng, bool need_response, std::size_t anchor) override;

private:
    std::unique_ptr<PredictiveRule> inner_;
    double threshold_;
};

struct RuleConfig {
    std::string name;
    RuleKind kind = RuleKind::bayesian_bootstrap;
    double bandwidth = 0.8;  // copula
    PluginModel plugin_model = PluginModel::automatic;
    double prior_mean = 0.0;  // conjugate
    double prior_variance = 1.0;
    double noise_variance = 1.0;
    std::vector<double> probs{0.5, 0.5};  // constant mock
    std::optional<double> binarize_at;
    std::string endpoint;  // external: host:port
    std::size_t max_pipeline = 1;
    std::size_t forward_steps = 0;  // 0: default for the kind

    void validate() const;
};

/// N - n used when the config leaves it unset: 2000 for built-in rules, 500 for
/// external services.
std::size_t default_forward_steps(RuleKind kind) noexcept;

/// Builds the rule and conditions it on every row of the design.
/// Throws UnsupportedOperation for copula with more than two classes and
/// ValidationError when a plug-in model does not match the response.
std::unique_ptr<PredictiveRule> make_rule(const RuleConfig& config, const DesignMatrix& data, const LossSpec& loss);

}  // namespace mgp
