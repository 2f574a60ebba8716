#include "mgp/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mgp/error.hpp"
#include "mgp/normal.hpp"
#include "mgp/uq.hpp"

namespace mgp {

std::string_view to_string(SetupKind kind) noexcept {
    switch (kind) {
        case SetupKind::gaussian: return "gaussian";
        case SetupKind::student: return "student";
        case SetupKind::heteroscedastic: return "heteroscedastic";
        case SetupKind::logistic: return "logistic";
        case SetupKind::gmm: return "gmm";
    }
    return "unknown";
}

SetupKind parse_setup_kind(std::string_view name) {
    for (const auto k : {SetupKind::gaussian, SetupKind::student, SetupKind::heteroscedastic, SetupKind::logistic,
                         SetupKind::gmm}) {
        if (to_string(k) == name) return k;
    }
    throw ValidationError("unknown setup kind '" + std::string(name) + "'");
}

Schema SyntheticSetup::schema() const {
    Schema s;
    for (std::size_t k = 0; k < dim; ++k) s.features.push_back({"x" + std::to_string(k + 1), ColumnKind::continuous, {}, false});
    s.response.name = "y";
    if (binary()) {
        s.response.kind = ColumnKind::categorical;
        s.response.levels = {"0", "1"};
        s.response.infer_levels = false;
    }
    return s;
}

void SyntheticSetup::validate() const {
    if (dim == 0) throw ValidationError("setup '" + name + "': dimension must be positive");
    if (static_cast<std::size_t>(beta.size()) != dim) throw ValidationError("setup '" + name + "': beta has the wrong length");
    if (kind == SetupKind::gaussian && !(noise_sd > 0.0)) throw ValidationError("setup '" + name + "': noise_sd must be positive");
    if (kind == SetupKind::student && df < 3) throw ValidationError("setup '" + name + "': df must be an integer >= 3");
    if (kind == SetupKind::heteroscedastic && !(s_left > 0.0 && s_mid > 0.0)) {
        throw ValidationError("setup '" + name + "': heteroscedastic scales must be positive");
    }
}

Eigen::VectorXd draw_beta(std::size_t dim, RngStream& rng) {
    Eigen::VectorXd b(static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = -2.0 + 5.0 * rng.uniform();
    return b;
}

double logistic_link(double u) noexcept { return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

double gmm_link(double u, double location) noexcept {
    return 0.7 * normal::cdf(u - location) + 0.3 * normal::cdf(u - 2.0);
}

double noise_variance(const SyntheticSetup& setup) {
    switch (setup.kind) {
        case SetupKind::gaussian: return setup.noise_sd * setup.noise_sd;
        case SetupKind::student: return static_cast<double>(setup.df) / (setup.df - 2.0);
        case SetupKind::heteroscedastic:
            return 0.25 * setup.s_left * setup.s_left + 0.5 * setup.s_mid * setup.s_mid + 0.25;
        default: return 0.0;
    }
}

Dataset generate(const SyntheticSetup& setup, RngStream& rng, std::size_t n) {
    setup.validate();
    if (n == 0) n = setup.sample_size();
    const std::size_t d = setup.dim;
    std::vector<double> x(n * d);
    for (double& v : x) v = -1.0 + 2.0 * rng.uniform();
    std::vector<double> y(n);
    std::vector<double> signal(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += x[i * d + k] * setup.beta(static_cast<Eigen::Index>(k));
        signal[i] = s;
    }
    switch (setup.kind) {
        case SetupKind::gaussian:
            for (std::size_t i = 0; i < n; ++i) y[i] = signal[i] + setup.noise_sd * rng.normal();
            break;
        case SetupKind::student:
            for (std::size_t i = 0; i < n; ++i) {
                const double z = rng.normal();
                double chi2 = 0.0;
                for (int k = 0; k < setup.df; ++k) {
                    const double e = rng.normal();
                    chi2 += e * e;
                }
                y[i] = signal[i] + z / std::sqrt(chi2 / setup.df);
            }
            break;
        case SetupKind::heteroscedastic: {
            std::vector<double> first(n);
            for (std::size_t i = 0; i < n; ++i) first[i] = x[i * d];
            const double q25 = sample_quantile(first, 0.25);
            const double q75 = sample_quantile(first, 0.75);
            for (std::size_t i = 0; i < n; ++i) {
                const double sigma = first[i] < q25 ? setup.s_left : (first[i] <= q75 ? setup.s_mid : 1.0);
                y[i] = signal[i] + sigma * rng.normal();
            }
            break;
        }
        case SetupKind::logistic:
            for (std::size_t i = 0; i < n; ++i) y[i] = rng.uniform() < logistic_link(signal[i]) ? 1.0 : 0.0;
            break;
        case SetupKind::gmm:
            for (std::size_t i = 0; i < n; ++i) y[i] = rng.uniform() < gmm_link(signal[i], setup.gmm_location) ? 1.0 : 0.0;
            break;
    }
    return Dataset(setup.schema(), std::move(x), std::move(y));
}

StandardizationParams analytic_standardization(const SyntheticSetup& setup) {
    setup.validate();
    StandardizationParams p;
    const double x_sd = 1.0 / std::sqrt(3.0);
    for (std::size_t k = 0; k < setup.dim; ++k) p.features.push_back({ColumnKind::continuous, 0.0, x_sd, {}});
    if (setup.binary()) {
        p.response = {ColumnKind::categorical, 0.0, 1.0, {"0", "1"}};
    } else {
        p.response = {ColumnKind::continuous, 0.0, std::sqrt(setup.beta.squaredNorm() / 3.0 + noise_variance(setup)), {}};
    }
    return p;
}

std::optional<Eigen::VectorXd> analytic_theta(const SyntheticSetup& setup) {
    if (setup.kind != SetupKind::gaussian && setup.kind != SetupKind::logistic) return std::nullopt;
    const auto params = analytic_standardization(setup);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(setup.dim + 1));
    // x'beta = x_std' (beta * sd_x); the response divides by its own sd.
    theta.tail(static_cast<Eigen::Index>(setup.dim)) = setup.beta * params.features[0].sd / params.response.sd;
    return theta;
}

Eigen::VectorXd population_theta(const DesignMatrix& population, const LossSpec& loss) {
    const auto r = fit(loss, population.x, population.y);
    if (!r.converged) throw NumericalError("population risk minimizer did not converge");
    return r.theta;
}

Eigen::VectorXd population_theta(const SyntheticSetup& setup, const LossSpec& loss, std::uint64_t seed,
                                  std::size_t draws) {
    if (const auto theta = analytic_theta(setup); theta && loss.active_columns() == setup.dim + 1) return *theta;
    RngStream rng(seed, 0);
    const Dataset big = generate(setup, rng, draws);
    return population_theta(encode(big, analytic_standardization(setup)), loss);
}

}  // namespace mgp
