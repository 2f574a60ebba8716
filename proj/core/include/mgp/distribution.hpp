#pragma once

#include <functional>
#include <variant>
#include <vector>

#include "mgp/rng.hpp"

namespace mgp {

struct Categorical {
    std::vector<double> probs;
};

/// Piecewise-uniform density on B bins: edges has B+1 strictly ascending entries.
struct BinnedContinuous {
    std::vector<double> edges;
    std::vector<double> probs;
};

struct AnalyticCdf {
    std::function<double(double)> cdf;
    std::function<double(double)> density;
    std::function<double(double)> quantile;
};

/// One-step-ahead predictive distribution returned by a rule.
using PredictedDistribution = std::variant<Categorical, BinnedContinuous, AnalyticCdf>;

/// Throws ProtocolError unless probabilities are non-negative and sum to one
/// within `tolerance`, and bin edges strictly ascend with matching lengths.
void validate(const PredictedDistribution& dist, double tolerance = 1e-9);

/// Draw by inversion of one uniform; Categorical returns a class index.
double sample(const PredictedDistribution& dist, RngStream& rng);
double quantile(const PredictedDistribution& dist, double u);

}  // namespace mgp
