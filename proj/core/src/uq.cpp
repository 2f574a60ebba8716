#include "mgp/uq.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "mgp/error.hpp"

namespace mgp {

double CredibleEllipsoid::mahalanobis2(const Eigen::VectorXd& theta) const {
    if (theta.size() != center.size()) {
        throw ValidationError("dimension mismatch: ellipsoid has " + std::to_string(center.size()) + ", point has " +
                              std::to_string(theta.size()));
    }
    return ((theta - center).array().square() / scale.array()).sum();
}

bool CredibleEllipsoid::contains(const Eigen::VectorXd& theta) const { return mahalanobis2(theta) <= radius2; }

bool contains(const CredibleEllipsoid& set, const Eigen::VectorXd& theta) { return set.contains(theta); }

Eigen::VectorXd sample_variances(const Eigen::MatrixXd& draws) {
    if (draws.rows() < 2) throw ValidationError("need at least two draws");
    const Eigen::RowVectorXd mean = draws.colwise().mean();
    const Eigen::MatrixXd centered = draws.rowwise() - mean;
    return centered.array().square().colwise().sum().transpose() / static_cast<double>(draws.rows() - 1);
}

CredibleEllipsoid joint_credible_set(const Eigen::MatrixXd& draws, double alpha, CutoffMode mode) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    CredibleEllipsoid set;
    set.level = 1.0 - alpha;
    set.center = draws.colwise().mean().transpose();
    set.scale = sample_variances(draws);
    for (Eigen::Index j = 0; j < set.scale.size(); ++j) {
        if (!(set.scale(j) > 0.0)) throw ValidationError("coordinate " + std::to_string(j) + " has zero variance");
    }
    const auto count = static_cast<std::size_t>(draws.rows());
    if (mode == CutoffMode::chi_squared) {
        const boost::math::chi_squared dist(static_cast<double>(draws.cols()));
        set.radius2 = boost::math::quantile(dist, 1.0 - alpha);
        return set;
    }
    std::vector<double> d(count);
    for (std::size_t l = 0; l < count; ++l) {
        d[l] = set.mahalanobis2(draws.row(static_cast<Eigen::Index>(l)).transpose());
    }
    // ceil with slack so (1 - 0.05) * 100 lands on 95, not 96
    const double target = (1.0 - alpha) * static_cast<double>(count);
    auto rank = static_cast<std::size_t>(std::ceil(target - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, count);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(rank - 1), d.end());
    set.radius2 = d[rank - 1];
    return set;
}

double sample_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MarginalInterval marginal_interval(const Eigen::MatrixXd& draws, std::size_t coordinate, double alpha) {
    if (draws.rows() < 2) throw ValidationError("need at least two draws");
    if (coordinate >= static_cast<std::size_t>(draws.cols())) throw ValidationError("coordinate out of range");
    const auto col = draws.col(static_cast<Eigen::Index>(coordinate));
    std::vector<double> v(col.data(), col.data() + col.size());
    return {sample_quantile(v, alpha / 2.0), sample_quantile(v, 1.0 - alpha / 2.0), 1.0 - alpha};
}

double winkler_score(const MarginalInterval& interval, double truth, double alpha) {
    double score = interval.upper - interval.lower;
    if (truth < interval.lower) score += 2.0 / alpha * (interval.lower - truth);
    if (truth > interval.upper) score += 2.0 / alpha * (truth - interval.upper);
    return score;
}

double coverage(std::span<const CredibleEllipsoid> sets, const Eigen::VectorXd& truth) {
    if (sets.empty()) throw ValidationError("coverage of an empty list of sets");
    std::size_t hits = 0;
    for (const auto& s : sets) hits += s.contains(truth);
    return static_cast<double>(hits) / static_cast<double>(sets.size());
}

double size_metric(const Eigen::MatrixXd& draws) { return sample_variances(draws).sum(); }

double median(std::vector<double> values) { return sample_quantile(std::move(values), 0.5); }

}  // namespace mgp
