#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "mgp/dataset.hpp"
#include "mgp/functionals.hpp"
#include "mgp/rng.hpp"

namespace mgp {

enum class SetupKind { gaussian, student, heteroscedastic, logistic, gmm };

std::string_view to_string(SetupKind kind) noexcept;
SetupKind parse_setup_kind(std::string_view name);

/// x ~ U[-1, 1]^d; y = x'beta + noise, or y ~ Bernoulli(L(x'beta)).
struct SyntheticSetup {
    std::string name;
    SetupKind kind = SetupKind::gaussian;
    std::size_t dim = 10;
    std::size_t n = 0;  // 0: 20 for continuous, 100 for binary responses
    double noise_sd = 1.0;  // gaussian
    int df = 5;             // student
    double s_left = 0.25;  // heteroscedastic
    double s_mid = 0.5;
    double gmm_location = 0.0;  // a in 0.7 Phi(u | a, 1) + 0.3 Phi(u | 2, 1)
    Eigen::VectorXd beta;

    bool binary() const noexcept { return kind == SetupKind::logistic || kind == SetupKind::gmm; }
    std::size_t sample_size() const noexcept { return n > 0 ? n : (binary() ? 100 : 20); }
    Schema schema() const;
    void validate() const;
};

/// beta_0 ~ U[-2, 3]^dim.
Eigen::VectorXd draw_beta(std::size_t dim, RngStream& rng);

double logistic_link(double u) noexcept;
double gmm_link(double u, double location) noexcept;

/// Variance of the additive noise (continuous kinds).
double noise_variance(const SyntheticSetup& setup);

/// Raw-scale sample of `n` rows (setup.sample_size() when n is 0).
Dataset generate(const SyntheticSetup& setup, RngStream& rng, std::size_t n = 0);

/// Exact population moments: features mean 0, sd 1/sqrt(3); response mean 0,
/// sd sqrt(|beta|^2 / 3 + noise variance).
StandardizationParams analytic_standardization(const SyntheticSetup& setup);

/// theta(F_0) on the standardized scale where it is known in closed form
/// (gaussian and logistic kinds), all design columns active.
std::optional<Eigen::VectorXd> analytic_theta(const SyntheticSetup& setup);

/// Closed form when available; otherwise the minimizer over `draws` fresh rows.
Eigen::VectorXd population_theta(const SyntheticSetup& setup, const LossSpec& loss, std::uint64_t seed,
                                  std::size_t draws = 1'000'000);

/// Minimizer over the whole population table.
Eigen::VectorXd population_theta(const DesignMatrix& population, const LossSpec& loss);

}  // namespace mgp
