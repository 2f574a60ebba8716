#include "mgp/copula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "mgp/error.hpp"
#include "mgp/normal.hpp"

namespace mgp {

namespace {

constexpr std::size_t kMaxCachedAnchors = 3000;
// Weights below this move u by less than the probability clamp.
constexpr double kNegligibleWeight = 1e-16;
constexpr double kStepTolerance = 1e-12;
constexpr double kInverseLimit = 64.0;

double binary_target(double u, double v, double b, double y, double rho) {
    const double a = normal::quantile(u);
    const double c = normal::bivariate_cdf(a, b, rho);
    const double t = y > 0.5 ? c / v : (u - c) / (1.0 - v);
    return std::clamp(t, 0.0, 1.0);
}

}  // namespace

double copula_alpha(std::size_t m) noexcept {
    const double md = static_cast<double>(m);
    return (2.0 - 1.0 / md) / (md + 1.0);
}

double feature_score(double x) noexcept {
    static const double limit = -normal::quantile(normal::kProbClamp);
    return std::clamp(x, -limit, limit);
}

CopulaAnchors::CopulaAnchors(const DesignMatrix& data, double rho_) : rows(data.rows()), dim(data.cols() - 1), rho(rho_) {
    scores.resize(rows * dim);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto f = data.features(i);
        for (std::size_t k = 0; k < dim; ++k) scores[i * dim + k] = feature_score(f[k]);
    }
    if (rows <= kMaxCachedAnchors) {
        table.assign(rows * rows, 1.0);
        for (std::size_t a = 0; a < rows; ++a) {
            for (std::size_t b = a; b < rows; ++b) {
                double q = 1.0;
                for (std::size_t k = 0; k < dim; ++k) {
                    q *= gaussian_copula::density_scores(scores[a * dim + k], scores[b * dim + k], rho);
                }
                table[a * rows + b] = q;
                table[b * rows + a] = q;
            }
        }
    }
}

double CopulaAnchors::kernel(std::size_t a, std::size_t b) const {
    if (!table.empty()) return table[a * rows + b];
    double q = 1.0;
    for (std::size_t k = 0; k < dim; ++k) {
        q *= gaussian_copula::density_scores(scores[a * dim + k], scores[b * dim + k], rho);
    }
    return q;
}

CopulaRuleBase::CopulaRuleBase(std::shared_ptr<const CopulaAnchors> anchors, double rho)
    : anchors_(std::move(anchors)), rho_(rho) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("copula bandwidth must lie in [0, 1)");
    if (!anchors_) throw ValidationError("copula rule needs its conditioning rows");
}

std::size_t CopulaRuleBase::resolve(std::span<const double> x, std::size_t anchor) const {
    if (anchor != kNoAnchor) {
        if (anchor >= anchors_->size()) throw ValidationError("anchor index out of range");
        return anchor;
    }
    if (x.size() != anchors_->dim) throw ValidationError("feature vector has the wrong dimension");
    for (std::size_t a = 0; a < anchors_->size(); ++a) {
        const auto s = anchors_->scores_of(a);
        bool same = true;
        for (std::size_t k = 0; k < x.size() && same; ++k) same = feature_score(x[k]) == s[k];
        if (same) return a;
    }
    return kNoAnchor;
}

double CopulaRuleBase::kernel(std::span<const double> x, std::size_t anchor, const Record& r) const {
    if (anchor != kNoAnchor && r.anchor != kNoAnchor) return anchors_->kernel(anchor, r.anchor);
    const std::size_t d = anchors_->dim;
    const double* rs = r.anchor != kNoAnchor ? anchors_->scores.data() + r.anchor * d : free_scores_.data() + r.free_offset;
    double q = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double xs = anchor != kNoAnchor ? anchors_->scores[anchor * d + k] : feature_score(x[k]);
        q *= gaussian_copula::density_scores(xs, rs[k], rho_);
    }
    return q;
}

void CopulaRuleBase::weights(std::span<const double> x, std::size_t anchor, std::vector<double>& out) const {
    anchor = resolve(x, anchor);
    out.resize(records_.size());
    for (std::size_t m = 0; m < records_.size(); ++m) {
        const double alpha = copula_alpha(m + 1);
        const double aq = alpha * kernel(x, anchor, records_[m]);
        out[m] = aq / (1.0 - alpha + aq);
    }
}

void CopulaRuleBase::append(std::span<const double> x, std::size_t anchor, double v, double y) {
    v = normal::clamp_prob(v);
    Record r{anchor, 0, v, normal::quantile(v), y};
    if (anchor == kNoAnchor) {
        r.free_offset = free_scores_.size();
        for (const double xk : x) free_scores_.push_back(feature_score(xk));
    }
    records_.push_back(r);
}

ContinuousCopulaRule::ContinuousCopulaRule(std::shared_ptr<const CopulaAnchors> anchors, double rho)
    : CopulaRuleBase(std::move(anchors), rho) {}

std::unique_ptr<PredictiveRule> ContinuousCopulaRule::clone() const {
    return std::make_unique<ContinuousCopulaRule>(*this);
}

double ContinuousCopulaRule::evaluate(std::span<const double> weights, double y, double* density) const {
    const double s = std::sqrt(1.0 - rho_ * rho_);
    double u = normal::cdf(y);
    double dens = density ? normal::pdf(y) : 0.0;
    for (std::size_t m = 0; m < weights.size(); ++m) {
        const double w = weights[m];
        if (w < kNegligibleWeight) continue;
        const double z = normal::quantile(u);
        const double arg = (z - rho_ * records_[m].b) / s;
        if (density) dens *= (1.0 - w) + w * std::exp(0.5 * (z * z - arg * arg)) / s;
        u = (1.0 - w) * u + w * normal::cdf(arg);
    }
    if (density) *density = dens;
    return u;
}

double ContinuousCopulaRule::inverse(std::span<const double> weights, double u) const {
    // Each update maps u_{m-1} to u_m monotonically, so walk the records
    // backwards solving one scalar equation per step.
    const double s = std::sqrt(1.0 - rho_ * rho_);
    const double z_lo = normal::quantile(normal::kProbClamp);
    const double z_hi = -z_lo;
    double t = std::clamp(u, 0.0, 1.0);
    for (std::size_t m = weights.size(); m-- > 0;) {
        const double w = weights[m];
        if (w < kNegligibleWeight) continue;
        const double shift = rho_ * records_[m].b;
        // outside the probability clamp the update is affine in u
        const double k_lo = normal::cdf((z_lo - shift) / s);
        const double k_hi = normal::cdf((z_hi - shift) / s);
        if (t <= (1.0 - w) * normal::kProbClamp + w * k_lo) {
            t = std::max((t - w * k_lo) / (1.0 - w), 0.0);
            continue;
        }
        if (t >= (1.0 - w) * (1.0 - normal::kProbClamp) + w * k_hi) {
            t = std::min((t - w * k_hi) / (1.0 - w), 1.0);
            continue;
        }
        double lo = z_lo;
        double hi = z_hi;
        double z = w < 0.5 ? normal::quantile(t) : shift + s * normal::quantile(t);
        z = std::clamp(z, lo, hi);
        for (int iter = 0; iter < 200; ++iter) {
            const double arg = (z - shift) / s;
            const double f = (1.0 - w) * normal::cdf(z) + w * normal::cdf(arg) - t;
            if (f == 0.0) break;
            if (f < 0.0) {
                lo = z;
            } else {
                hi = z;
            }
            const double slope = (1.0 - w) * normal::pdf(z) + w * normal::pdf(arg) / s;
            double next = z - f / slope;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            const bool done = std::abs(next - z) <= kStepTolerance * (1.0 + std::abs(z));
            z = next;
            if (done || hi - lo <= 1e-15 * (1.0 + std::abs(z))) break;
        }
        t = normal::cdf(z);
    }
    if (t <= 0.0) return -kInverseLimit;
    if (t >= 1.0) return kInverseLimit;
    return std::clamp(-std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * t), -kInverseLimit, kInverseLimit);
}

double ContinuousCopulaRule::cdf(std::span<const double> x, double y, std::size_t anchor) const {
    std::vector<double> w;
    weights(x, anchor, w);
    return evaluate(w, y, nullptr);
}

double ContinuousCopulaRule::density(std::span<const double> x, double y, std::size_t anchor) const {
    std::vector<double> w;
    weights(x, anchor, w);
    double dens = 0.0;
    evaluate(w, y, &dens);
    return dens;
}

std::optional<PredictedDistribution> ContinuousCopulaRule::predict(std::span<const double> x, std::size_t anchor) const {
    auto w = std::make_shared<std::vector<double>>();
    weights(x, anchor, *w);
    auto self = std::make_shared<ContinuousCopulaRule>(*this);
    AnalyticCdf dist;
    dist.cdf = [self, w](double y) { return self->evaluate(*w, y, nullptr); };
    dist.density = [self, w](double y) {
        double d = 0.0;
        self->evaluate(*w, y, &d);
        return d;
    };
    dist.quantile = [self, w](double u) { return self->inverse(*w, u); };
    return dist;
}

double ContinuousCopulaRule::draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const {
    std::vector<double> w;
    weights(x, anchor, w);
    return inverse(w, u);
}

void ContinuousCopulaRule::absorb(std::span<const double> x, double y, std::size_t anchor) {
    anchor = resolve(x, anchor);
    append(x, anchor, cdf(x, y, anchor), y);
}

double ContinuousCopulaRule::forward(std::span<const double> x, RngStream& rng, bool need_response,
                                     std::size_t anchor) {
    anchor = resolve(x, anchor);
    const double u = rng.uniform_open();
    double y = std::numeric_limits<double>::quiet_NaN();
    if (need_response) y = draw_with_uniform(x, u, anchor);
    // The drawn y satisfies P_i(y | x) = u, so u is the record's conditional CDF.
    append(x, anchor, u, y);
    return y;
}

BinaryCopulaRule::BinaryCopulaRule(std::shared_ptr<const CopulaAnchors> anchors, double rho,
                                   double initial_probability)
    : CopulaRuleBase(std::move(anchors), rho), p0_(initial_probability), cache_(anchors_->size(), initial_probability) {
    if (!(p0_ > 0.0 && p0_ < 1.0)) throw ValidationError("initial probability must lie in (0, 1)");
}

std::unique_ptr<PredictiveRule> BinaryCopulaRule::clone() const { return std::make_unique<BinaryCopulaRule>(*this); }

double BinaryCopulaRule::probability(std::span<const double> x, std::size_t anchor) const {
    anchor = resolve(x, anchor);
    if (anchor != kNoAnchor) return cache_[anchor];
    double u = p0_;
    for (std::size_t m = 0; m < records_.size(); ++m) {
        const Record& r = records_[m];
        const double alpha = copula_alpha(m + 1);
        const double aq = alpha * kernel(x, anchor, r);
        const double w = aq / (1.0 - alpha + aq);
        if (w < kNegligibleWeight) continue;
        u = (1.0 - w) * u + w * binary_target(u, r.v, r.b, r.y, rho_);
    }
    return std::clamp(u, 0.0, 1.0);
}

std::optional<PredictedDistribution> BinaryCopulaRule::predict(std::span<const double> x, std::size_t anchor) const {
    const double p = probability(x, anchor);
    return Categorical{{1.0 - p, p}};
}

double BinaryCopulaRule::draw_with_uniform(std::span<const double> x, double u, std::size_t anchor) const {
    return u < probability(x, anchor) ? 1.0 : 0.0;
}

void BinaryCopulaRule::absorb(std::span<const double> x, double y, std::size_t anchor) {
    if (y != 0.0 && y != 1.0) throw ValidationError("binary copula rule absorbs labels 0 or 1");
    anchor = resolve(x, anchor);
    const double v = normal::clamp_prob(probability(x, anchor));
    const double b = normal::quantile(v);
    const double alpha = copula_alpha(records_.size() + 1);
    std::vector<double> free;
    if (anchor == kNoAnchor) {
        for (const double xk : x) free.push_back(feature_score(xk));
    }
    const std::size_t d = anchors_->dim;
    for (std::size_t j = 0; j < cache_.size(); ++j) {
        double q = 1.0;
        if (anchor != kNoAnchor) {
            q = anchors_->kernel(j, anchor);
        } else {
            for (std::size_t k = 0; k < d; ++k) {
                q *= gaussian_copula::density_scores(anchors_->scores[j * d + k], free[k], rho_);
            }
        }
        const double aq = alpha * q;
        const double w = aq / (1.0 - alpha + aq);
        if (w < kNegligibleWeight) continue;
        const double u = cache_[j];
        cache_[j] = std::clamp((1.0 - w) * u + w * binary_target(u, v, b, y, rho_), 0.0, 1.0);
    }
    append(x, anchor, v, y);
}

std::unique_ptr<PredictiveRule> make_copula_rule(const DesignMatrix& data, double rho) {
    if (data.rows() == 0) throw ValidationError("copula rule needs at least one row");
    if (data.categorical() && data.num_classes > 2) {
        throw UnsupportedOperation("copula rule is not applied to multinomial responses");
    }
    auto anchors = std::make_shared<const CopulaAnchors>(data, rho);
    std::unique_ptr<PredictiveRule> rule;
    if (data.categorical()) {
        const double freq = data.y.mean();
        rule = std::make_unique<BinaryCopulaRule>(anchors, rho, std::clamp(freq, 0.01, 0.99));
    } else {
        rule = std::make_unique<ContinuousCopulaRule>(anchors, rho);
    }
    for (std::size_t i = 0; i < data.rows(); ++i) rule->update(data.features(i), data.y(static_cast<Eigen::Index>(i)), i);
    return rule;
}

}  // namespace mgp
