#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mgp/rules.hpp"
#include "mgp/wire.hpp"

namespace mgp {

/// Predictive rule served by a stateless remote model. The client keeps the
/// context z_{1:i} (original plus generated rows) and resends it with every
/// query. Each instance, clones included, opens its own connection on first use.
class ExternalRule final : public PredictiveRule {
public:
    ExternalRule(Endpoint endpoint, ServiceTask task, std::size_t num_classes, std::size_t max_pipeline = 1,
                 std::chrono::milliseconds timeout = std::chrono::seconds(60));
    ExternalRule(const ExternalRule& other);

    std::unique_ptr<PredictiveRule> clone() const override;
    RuleKind kind() const noexcept override { return RuleKind::external; }

    std::optional<PredictedDistribution> predict(std::span<const double> x, std::size_t anchor) const override;
    /// Batched predictions at several query rows over the current context.
    std::vector<PredictedDistribution> predict_many(std::span<const double> queries) const;

    std::size_t context_rows() const noexcept { return context_y_.size(); }
    /// Handshake of the live connection, connecting if needed.
    const wire::Handshake& handshake() const;

protected:
    void absorb(std::span<const double> x, double y, std::size_t anchor) override;

private:
    ServiceClient& client() const;

    Endpoint endpoint_;
    ServiceTask task_;
    std::size_t num_classes_;
    std::size_t max_pipeline_;
    std::chrono::milliseconds timeout_;
    std::size_t dim_ = 0;
    bool dim_known_ = false;
    std::vector<double> context_x_;
    std::vector<double> context_y_;
    mutable std::unique_ptr<ServiceClient> client_;
};

}  // namespace mgp
