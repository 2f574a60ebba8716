#include "mgp/rules.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "mgp/copula.hpp"
#include "mgp/error.hpp"
#include "mgp/external_rule.hpp"
#include "mgp/normal.hpp"

namespace mgp {

namespace {

constexpr std::array<std::pair<RuleKind, std::string_view>, 8> kRuleNames{{
    {RuleKind::bayesian_bootstrap, "bb"},
    {RuleKind::copula, "copula"},
    {RuleKind::plugin, "plugin"},
    {RuleKind::conjugate, "conjugate"},
    {RuleKind::external, "external"},
    {RuleKind::mock_constant, "mock_constant"},
    {RuleKind::mock_drifting, "mock_drifting"},
    {RuleKind::mock_polya, "mock_polya"},
}};

AnalyticCdf normal_distribution(double mean, double sd) {
    AnalyticCdf d;
    d.cdf = [=](double y) { return normal::cdf((y - mean) / sd); };
    d.density = [=](double y) { return normal::pdf((y - mean) / sd) / sd; };
    d.quantile = [=](double u) { return mean + sd * normal::quantile(u); };
    return d;
}

}  // namespace

std::string_view to_string(RuleKind kind) noexcept {
    for (const auto& [k, name] : kRuleNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

RuleKind parse_rule_kind(std::string_view name) {
    for (const auto& [k, n] : kRuleNames) {
        if (n == name) return k;
    }
    throw ValidationError("unknown rule kind '" + std::string(name) + "'");
}

std::optional<PredictedDistribution> PredictiveRule::predict(std::span<const double>, std::size_t) const {
    return std::nullopt;
}

double PredictiveRule::draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const {
    const auto dist = predict(x, anchor);
    if (!dist) throw UnsupportedOperation("rule '" + std::string(to_string(kind())) + "' cannot sample pointwise");
    return quantile(*dist, u);
}

double PredictiveRule::forward(std::span<const double> x, RngStream& rng, bool, std::size_t anchor) {
    const double y = sample(x, rng, anchor);
    absorb(x, y, anchor);
    return y;
}

BayesianBootstrapRule::BayesianBootstrapRule(std::size_t rows) : pool_(rows) {
    if (rows == 0) throw ValidationError("Bayesian bootstrap needs at least one row");
    std::iota(pool_.begin(), pool_.end(), std::size_t{0});
    for (std::size_t i = 0; i < rows; ++i) count_step();
}

std::unique_ptr<PredictiveRule> BayesianBootstrapRule::clone() const {
    return std::make_unique<BayesianBootstrapRule>(*this);
}

double BayesianBootstrapRule::draw_with_uniform(std::span<const double>, double, std::size_t) const {
    throw UnsupportedOperation("Bayesian bootstrap samples (x, y) pairs jointly; use sample_row");
}

std::size_t BayesianBootstrapRule::sample_row(RngStream& rng) const { return pool_[rng.index(pool_.size())]; }

void BayesianBootstrapRule::update_row(std::size_t row) {
    pool_.push_back(row);
    count_step();
}

std::vector<double> BayesianBootstrapRule::counts(std::size_t rows) const {
    std::vector<double> c(rows, 0.0);
    for (const std::size_t r : pool_) c.at(r) += 1.0;
    return c;
}

void BayesianBootstrapRule::absorb(std::span<const double>, double, std::size_t anchor) {
    if (anchor == kNoAnchor) throw UnsupportedOperation("Bayesian bootstrap absorbs pooled rows only");
    pool_.push_back(anchor);
}

PluginRule::PluginRule(PluginModel model, const LossSpec& loss, const DesignMatrix& data)
    : model_(model), active_(loss.active), num_classes_(loss.num_classes), damping_(loss.damping) {
    if (model_ == PluginModel::automatic) {
        model_ = data.categorical() ? PluginModel::logistic : PluginModel::gaussian_linear;
    }
    if ((model_ == PluginModel::logistic) != data.categorical()) {
        throw ValidationError("plug-in model does not match the response kind");
    }
    const auto q = static_cast<Eigen::Index>(loss.active_columns());
    if (model_ == PluginModel::gaussian_linear) {
        gram_ = Eigen::MatrixXd::Zero(q, q);
        moment_ = Eigen::VectorXd::Zero(q);
        for (std::size_t i = 0; i < data.rows(); ++i) {
            const Eigen::VectorXd r = active_row(data.features(i));
            gram_.noalias() += r * r.transpose();
            moment_ += r * data.y(static_cast<Eigen::Index>(i));
        }
    } else {
        for (std::size_t i = 0; i < data.rows(); ++i) {
            const Eigen::VectorXd r = active_row(data.features(i));
            rows_.insert(rows_.end(), r.data(), r.data() + r.size());
            labels_.push_back(data.y(static_cast<Eigen::Index>(i)));
        }
    }
    for (std::size_t i = 0; i < data.rows(); ++i) count_step();
    refit();
}

std::unique_ptr<PredictiveRule> PluginRule::clone() const { return std::make_unique<PluginRule>(*this); }

Eigen::VectorXd PluginRule::active_row(std::span<const double> x) const {
    if (x.size() + 1 != active_.size()) throw ValidationError("feature vector has the wrong dimension");
    Eigen::VectorXd r(static_cast<Eigen::Index>(std::count(active_.begin(), active_.end(), true)));
    Eigen::Index k = 0;
    for (std::size_t j = 0; j < active_.size(); ++j) {
        if (active_[j]) r(k++) = j == 0 ? 1.0 : x[j - 1];
    }
    return r;
}

void PluginRule::refit() {
    if (model_ == PluginModel::gaussian_linear) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram_);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
            throw NumericalError("plug-in design is rank deficient");
        }
        theta_ = ldlt.solve(moment_);
        theta_ += ldlt.solve(moment_ - gram_ * theta_);
        converged_ = true;
        return;
    }
    const auto q = static_cast<Eigen::Index>(rows_.size() / labels_.size());
    const Eigen::Map<const RowMatrix> x(rows_.data(), static_cast<Eigen::Index>(labels_.size()), q);
    const Eigen::Map<const Eigen::VectorXd> y(labels_.data(), static_cast<Eigen::Index>(labels_.size()));
    LogisticOptions options;
    options.damping = damping_;
    const Eigen::VectorXd warm = theta_;
    if (warm.size() > 0) options.warm_start = &warm;
    const std::vector<bool> all(static_cast<std::size_t>(q), true);
    auto result = fit_logistic(RowMatrix(x), y, num_classes_, all, options);
    theta_ = std::move(result.theta);
    converged_ = result.converged;
}

std::optional<PredictedDistribution> PluginRule::predict(std::span<const double> x, std::size_t) const {
    const Eigen::VectorXd r = active_row(x);
    if (model_ == PluginModel::gaussian_linear) return normal_distribution(r.dot(theta_), 1.0);
    const std::vector<bool> all(static_cast<std::size_t>(r.size()), true);
    const Eigen::VectorXd p = softmax_probabilities({r.data(), static_cast<std::size_t>(r.size())}, all, num_classes_, theta_);
    return Categorical{{p.data(), p.data() + p.size()}};
}

double PluginRule::draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const {
    if (model_ == PluginModel::gaussian_linear) return active_row(x).dot(theta_) + normal::quantile(u);
    return PredictiveRule::draw_with_uniform(x, u, anchor);
}

void PluginRule::absorb(std::span<const double> x, double y, std::size_t) {
    const Eigen::VectorXd r = active_row(x);
    if (model_ == PluginModel::gaussian_linear) {
        gram_.noalias() += r * r.transpose();
        moment_ += r * y;
    } else {
        rows_.insert(rows_.end(), r.data(), r.data() + r.size());
        labels_.push_back(y);
    }
    refit();
}

ConjugateNormalRule::ConjugateNormalRule(double prior_mean, double prior_variance, double noise_variance)
    : mean_(prior_mean), variance_(prior_variance), noise_variance_(noise_variance) {
    if (!(prior_variance > 0.0) || !(noise_variance > 0.0)) {
        throw ValidationError("conjugate rule needs positive prior and noise variances");
    }
}

std::unique_ptr<PredictiveRule> ConjugateNormalRule::clone() const {
    return std::make_unique<ConjugateNormalRule>(*this);
}

std::optional<PredictedDistribution> ConjugateNormalRule::predict(std::span<const double>, std::size_t) const {
    return normal_distribution(mean_, std::sqrt(predictive_variance()));
}

double ConjugateNormalRule::draw_with_uniform(std::span<const double>, double u, std::size_t) const {
    return mean_ + std::sqrt(predictive_variance()) * normal::quantile(u);
}

void ConjugateNormalRule::absorb(std::span<const double>, double y, std::size_t) {
    const double precision = 1.0 / variance_ + 1.0 / noise_variance_;
    mean_ = (mean_ / variance_ + y / noise_variance_) / precision;
    variance_ = 1.0 / precision;
}

ConstantCategoricalRule::ConstantCategoricalRule(std::vector<double> probs) : probs_(std::move(probs)) {
    validate(Categorical{probs_});
}

std::unique_ptr<PredictiveRule> ConstantCategoricalRule::clone() const {
    return std::make_unique<ConstantCategoricalRule>(*this);
}

std::optional<PredictedDistribution> ConstantCategoricalRule::predict(std::span<const double>, std::size_t) const {
    return Categorical{probs_};
}

std::unique_ptr<PredictiveRule> DriftingBinaryRule::clone() const {
    return std::make_unique<DriftingBinaryRule>(*this);
}

std::optional<PredictedDistribution> DriftingBinaryRule::predict(std::span<const double>, std::size_t) const {
    const double p = 0.5 + 1.0 / (static_cast<double>(step()) + 2.0);
    return Categorical{{1.0 - p, p}};
}

std::unique_ptr<PredictiveRule> PolyaUrnRule::clone() const { return std::make_unique<PolyaUrnRule>(*this); }

std::optional<PredictedDistribution> PolyaUrnRule::predict(std::span<const double>, std::size_t) const {
    const double p = total_ > 0.0 ? ones_ / total_ : 0.5;
    return Categorical{{1.0 - p, p}};
}

void PolyaUrnRule::absorb(std::span<const double>, double y, std::size_t) {
    if (y != 0.0 && y != 1.0) throw ValidationError("Polya urn absorbs labels 0 or 1");
    ones_ += y;
    total_ += 1.0;
}

BinarizedRule::BinarizedRule(std::unique_ptr<PredictiveRule> inner, double threshold)
    : inner_(std::move(inner)), threshold_(threshold) {
    if (!inner_) throw ValidationError("binarized rule needs a wrapped rule");
    for (std::size_t i = 0; i < inner_->step(); ++i) count_step();
}

std::unique_ptr<PredictiveRule> BinarizedRule::clone() const {
    return std::make_unique<BinarizedRule>(inner_->clone(), threshold_);
}

std::optional<PredictedDistribution> BinarizedRule::predict(std::span<const double> x, std::size_t anchor) const {
    const auto dist = inner_->predict(x, anchor);
    if (!dist) throw UnsupportedOperation("wrapped rule has no explicit predictive distribution");
    double below = 0.0;
    if (const auto* a = std::get_if<AnalyticCdf>(&*dist)) {
        below = a->cdf(threshold_);
    } else if (const auto* b = std::get_if<BinnedContinuous>(&*dist)) {
        for (std::size_t k = 0; k < b->probs.size(); ++k) {
            const double lo = b->edges[k];
            const double hi = b->edges[k + 1];
            below += b->probs[k] * std::clamp((threshold_ - lo) / (hi - lo), 0.0, 1.0);
        }
    } else {
        throw UnsupportedOperation("binarizing needs a continuous predictive distribution");
    }
    below = std::clamp(below, 0.0, 1.0);
    return Categorical{{below, 1.0 - below}};
}

double BinarizedRule::draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const {
    return inner_->draw_with_uniform(x, u, anchor);
}

void BinarizedRule::absorb(std::span<const double> x, double y, std::size_t anchor) { inner_->update(x, y, anchor); }

double BinarizedRule::forward(std::span<const double> x, RngStream& rng, bool need_response, std::size_t anchor) {
    return inner_->advance(x, rng, need_response, anchor);
}

void RuleConfig::validate() const {
    if (kind == RuleKind::copula && !(bandwidth >= 0.0 && bandwidth < 1.0)) {
        throw ValidationError("rule '" + name + "': bandwidth must lie in [0, 1)");
    }
    if (kind == RuleKind::conjugate && (!(prior_variance > 0.0) || !(noise_variance > 0.0))) {
        throw ValidationError("rule '" + name + "': prior_variance and noise_variance must be positive");
    }
    if (kind == RuleKind::external && endpoint.empty()) {
        throw ValidationError("rule '" + name + "': external rule needs an endpoint");
    }
    if (kind == RuleKind::mock_constant) mgp::validate(Categorical{probs});
}

std::size_t default_forward_steps(RuleKind kind) noexcept { return kind == RuleKind::external ? 500 : 2000; }

std::unique_ptr<PredictiveRule> make_rule(const RuleConfig& config, const DesignMatrix& data, const LossSpec& loss) {
    config.validate();
    if (data.rows() == 0) throw ValidationError("cannot condition a rule on an empty dataset");
    std::unique_ptr<PredictiveRule> rule;
    bool absorb_rows = true;
    switch (config.kind) {
        case RuleKind::bayesian_bootstrap:
            rule = std::make_unique<BayesianBootstrapRule>(data.rows());
            absorb_rows = false;
            break;
        case RuleKind::copula:
            rule = make_copula_rule(data, config.bandwidth);
            absorb_rows = false;
            break;
        case RuleKind::plugin:
            rule = std::make_unique<PluginRule>(config.plugin_model, loss, data);
            absorb_rows = false;
            break;
        case RuleKind::conjugate:
            if (data.categorical()) throw ValidationError("conjugate normal rule needs a continuous response");
            rule = std::make_unique<ConjugateNormalRule>(config.prior_mean, config.prior_variance,
                                                         config.noise_variance);
            break;
        case RuleKind::external:
            rule = std::make_unique<ExternalRule>(Endpoint::parse(config.endpoint),
                                                  data.categorical() ? ServiceTask::classification
                                                                     : ServiceTask::regression,
                                                  data.num_classes, config.max_pipeline);
            break;
        case RuleKind::mock_constant:
            rule = std::make_unique<ConstantCategoricalRule>(config.probs);
            break;
        case RuleKind::mock_drifting:
            rule = std::make_unique<DriftingBinaryRule>();
            break;
        case RuleKind::mock_polya:
            if (data.categorical() && data.num_classes != 2) throw ValidationError("Polya urn mock is binary");
            rule = std::make_unique<PolyaUrnRule>();
            break;
    }
    if (absorb_rows) {
        for (std::size_t i = 0; i < data.rows(); ++i) {
            rule->update(data.features(i), data.y(static_cast<Eigen::Index>(i)), i);
        }
    }
    if (config.binarize_at) rule = std::make_unique<BinarizedRule>(std::move(rule), *config.binarize_at);
    return rule;
}

}  // namespace mgp
