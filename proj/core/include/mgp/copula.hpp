#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mgp/dataset.hpp"
#include "mgp/rules.hpp"

namespace mgp {

/// alpha_m = (2 - 1/m) / (m + 1), m >= 1.
double copula_alpha(std::size_t m) noexcept;

/// Normal scores of the conditioning rows and the feature-copula density
/// between every pair of them. Shared read-only by all clones of a rule.
struct CopulaAnchors {
    CopulaAnchors(const DesignMatrix& data, double rho);

    std::size_t size() const noexcept { return rows; }
    std::span<const double> scores_of(std::size_t row) const { return {scores.data() + row * dim, dim}; }
    /// prod_k c_rho over feature scores of two anchors.
    double kernel(std::size_t a, std::size_t b) const;

    std::size_t rows = 0;
    std::size_t dim = 0;
    double rho = 0.8;
    std::vector<double> scores;
    std::vector<double> table;  // rows x rows, empty when too large to cache
};

/// Feature score clamped to the range reachable through the probability clamp.
double feature_score(double x) noexcept;

/// Shared record keeping for the recursive bivariate-copula rules.
class CopulaRuleBase : public PredictiveRule {
public:
    double bandwidth() const noexcept { return rho_; }
    std::size_t records() const noexcept { return records_.size(); }
    FunctionalMode functional_mode() const noexcept override { return FunctionalMode::predictive_refit; }

    /// Update weights w_m(x) for every absorbed record.
    void weights(std::span<const double> x, std::size_t anchor, std::vector<double>& out) const;

protected:
    CopulaRuleBase(std::shared_ptr<const CopulaAnchors> anchors, double rho);

    struct Record {
        std::size_t anchor;       // kNoAnchor for free features
        std::size_t free_offset;  // into free_scores_ when anchor is kNoAnchor
        double v;                 // pre-update conditional CDF / probability, in (0, 1)
        double b;                 // Phi^-1(v)
        double y;
    };

    void append(std::span<const double> x, std::size_t anchor, double v, double y);
    std::size_t resolve(std::span<const double> x, std::size_t anchor) const;
    double kernel(std::span<const double> x, std::size_t anchor, const Record& r) const;

    std::shared_ptr<const CopulaAnchors> anchors_;
    double rho_;
    std::vector<Record> records_;
    std::vector<double> free_scores_;
};

/// Continuous response: P_i(y | x) from the recursion
/// u <- (1 - w_m(x)) u + w_m(x) h_rho(u, v_m), starting at Phi(y).
class ContinuousCopulaRule final : public CopulaRuleBase {
public:
    ContinuousCopulaRule(std::shared_ptr<const CopulaAnchors> anchors, double rho);

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::copula; }

    double cdf(std::span<const double> x, double y, std::size_t anchor = kNoAnchor) const;
    double density(std::span<const double> x, double y, std::size_t anchor = kNoAnchor) const;
    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;
    double draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const override;

    /// Root of P_i(y | x) = u for precomputed weights, clamped to [-64, 64].
    double inverse(std::span<const double> weights, double u) const;
    /// CDF and density at y for precomputed weights.
    double evaluate(std::span<const double> weights, double y, double* density) const;

protected:
    void absorb(std::span<const double> x, double y, std::size_t anchor) override;
    double forward(std::span<const double> x, RngStream& rng, bool need_response, std::size_t anchor) override;
};

/// Binary response: p_i(1 | x) updated through conditional Gaussian-copula
/// targets. Probabilities at the anchors are cached and updated incrementally.
class BinaryCopulaRule final : public CopulaRuleBase {
public:
    BinaryCopulaRule(std::shared_ptr<const CopulaAnchors> anchors, double rho, double initial_probability);

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::copula; }

    double probability(std::span<const double> x, std::size_t anchor = kNoAnchor) const;
    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;
    double draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const override;

    double initial_probability() const noexcept { return p0_; }

protected:
    void absorb(std::span<const double> x, double y, std::size_t anchor) override;

private:
    double p0_;
    std::vector<double> cache_;  // p_i(1 | anchor)
};

/// Rule conditioned on every row of the design. Continuous designs give a
/// ContinuousCopulaRule; binary ones a BinaryCopulaRule with the class-1
/// frequency clamped to [0.01, 0.99] as the starting probability.
std::unique_ptr<PredictiveRule> make_copula_rule(const DesignMatrix& data, double rho);

}  // namespace mgp
