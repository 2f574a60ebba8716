#include "mgp/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mgp/error.hpp"

namespace mgp {

namespace {

void check_probs(const std::vector<double>& probs, double tolerance) {
    if (probs.empty()) throw ProtocolError("empty probability vector");
    double total = 0.0;
    for (const double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ProtocolError("negative or non-finite probability");
        total += p;
    }
    if (std::abs(total - 1.0) > tolerance) {
        throw ProtocolError("probabilities sum to " + std::to_string(total) + ", not 1");
    }
}

// Index of the first cumulative probability exceeding u (last index as fallback).
std::size_t pick(const std::vector<double>& probs, double u) {
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        acc += probs[k] / total;
        if (u < acc) return k;
    }
    std::size_t last = probs.size() - 1;
    while (last > 0 && probs[last] == 0.0) --last;
    return last;
}

}  // namespace

void validate(const PredictedDistribution& dist, double tolerance) {
    if (const auto* c = std::get_if<Categorical>(&dist)) {
        check_probs(c->probs, tolerance);
    } else if (const auto* b = std::get_if<BinnedContinuous>(&dist)) {
        check_probs(b->probs, tolerance);
        if (b->edges.size() != b->probs.size() + 1) throw ProtocolError("grid needs one more edge than bins");
        for (std::size_t i = 1; i < b->edges.size(); ++i) {
            if (!(b->edges[i] > b->edges[i - 1]) || !std::isfinite(b->edges[i])) {
                throw ProtocolError("grid edges are not strictly ascending");
            }
        }
    } else {
        const auto& a = std::get<AnalyticCdf>(dist);
        if (!a.cdf) throw ProtocolError("analytic distribution without a CDF");
    }
}

double quantile(const PredictedDistribution& dist, double u) {
    if (const auto* c = std::get_if<Categorical>(&dist)) return static_cast<double>(pick(c->probs, u));
    if (const auto* b = std::get_if<BinnedContinuous>(&dist)) {
        const double total = std::accumulate(b->probs.begin(), b->probs.end(), 0.0);
        double acc = 0.0;
        for (std::size_t k = 0; k < b->probs.size(); ++k) {
            const double p = b->probs[k] / total;
            if (u < acc + p || k + 1 == b->probs.size()) {
                const double frac = p > 0.0 ? std::clamp((u - acc) / p, 0.0, 1.0) : 0.5;
                return b->edges[k] + frac * (b->edges[k + 1] - b->edges[k]);
            }
            acc += p;
        }
    }
    const auto& a = std::get<AnalyticCdf>(dist);
    if (!a.quantile) throw UnsupportedOperation("analytic distribution has no quantile function");
    return a.quantile(u);
}

double sample(const PredictedDistribution& dist, RngStream& rng) {
    return quantile(dist, rng.uniform_open());
}

}  // namespace mgp
