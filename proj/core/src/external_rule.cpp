#include "mgp/external_rule.hpp"

#include <algorithm>

#include "mgp/error.hpp"

namespace mgp {

ExternalRule::ExternalRule(Endpoint endpoint, ServiceTask task, std::size_t num_classes, std::size_t max_pipeline,
                           std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)),
      task_(task),
      num_classes_(num_classes),
      max_pipeline_(std::max<std::size_t>(max_pipeline, 1)),
      timeout_(timeout) {}

ExternalRule::ExternalRule(const ExternalRule& other)
    : PredictiveRule(other),
      endpoint_(other.endpoint_),
      task_(other.task_),
      num_classes_(other.num_classes_),
      max_pipeline_(other.max_pipeline_),
      timeout_(other.timeout_),
      dim_(other.dim_),
      dim_known_(other.dim_known_),
      context_x_(other.context_x_),
      context_y_(other.context_y_) {}

std::unique_ptr<PredictiveRule> ExternalRule::clone() const { return std::make_unique<ExternalRule>(*this); }

ServiceClient& ExternalRule::client() const {
    if (!client_) client_ = std::make_unique<ServiceClient>(endpoint_, task_, timeout_);
    return *client_;
}

const wire::Handshake& ExternalRule::handshake() const { return client().handshake(); }

std::optional<PredictedDistribution> ExternalRule::predict(std::span<const double> x, std::size_t) const {
    return std::move(predict_many(x).front());
}

std::vector<PredictedDistribution> ExternalRule::predict_many(std::span<const double> queries) const {
    if (dim_known_ && dim_ > 0 && queries.size() % dim_ != 0) throw ValidationError("query width differs from context");
    const std::size_t dim = dim_known_ ? dim_ : queries.size();
    std::vector<PredictedDistribution> out;
    const std::size_t count = dim == 0 ? 1 : queries.size() / dim;
    for (std::size_t start = 0; start < count; start += max_pipeline_) {
        const std::size_t take = std::min(max_pipeline_, count - start);
        auto part = client().query_many(dim, context_x_, context_y_, queries.subspan(start * dim, take * dim));
        for (auto& d : part) {
            if (task_ == ServiceTask::classification && num_classes_ > 0 &&
                std::get<Categorical>(d).probs.size() != num_classes_) {
                throw ProtocolError("service returned " + std::to_string(std::get<Categorical>(d).probs.size()) +
                                    " class probabilities, expected " + std::to_string(num_classes_));
            }
            out.push_back(std::move(d));
        }
    }
    return out;
}

void ExternalRule::absorb(std::span<const double> x, double y, std::size_t) {
    if (!dim_known_) {
        dim_ = x.size();
        dim_known_ = true;
    } else if (x.size() != dim_) {
        throw ValidationError("feature vector has the wrong dimension");
    }
    context_x_.insert(context_x_.end(), x.begin(), x.end());
    context_y_.push_back(y);
}

}  // namespace mgp
