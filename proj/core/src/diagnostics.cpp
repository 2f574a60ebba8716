#include "mgp/diagnostics.hpp"

#include <cmath>
#include <fstream>

#include "mgp/error.hpp"
#include "mgp/format.hpp"
#include "mgp/parallel.hpp"

namespace mgp {

namespace {

std::vector<double> categorical_at(const PredictiveRule& rule, std::span<const double> x) {
    const auto dist = rule.predict(x);
    const auto* c = dist ? std::get_if<Categorical>(&*dist) : nullptr;
    if (!c) throw UnsupportedOperation("a.c.i.d. needs a rule with an explicit categorical predictive");
    return c->probs;
}

}  // namespace

TraceSeries l1_trace(const PosteriorDraws& draws, const Eigen::VectorXd& theta_data) {
    TraceSeries out;
    const double p = static_cast<double>(theta_data.size());
    for (const auto& t : draws.trajectories) {
        if (t.failed) continue;
        if (t.checkpoints.empty()) throw ValidationError("trace needs draws with checkpoints");
        std::vector<double> series;
        std::vector<std::size_t> steps;
        for (const auto& c : t.checkpoints) {
            steps.push_back(c.step);
            series.push_back((theta_data - c.theta).lpNorm<1>() / p);
        }
        if (out.steps.empty()) {
            out.steps = steps;
        } else if (steps != out.steps) {
            throw ValidationError("trajectories have different checkpoints");
        }
        out.per_trajectory.push_back(std::move(series));
        out.trajectory_ids.push_back(t.index);
    }
    out.mean.assign(out.steps.size(), 0.0);
    for (const auto& s : out.per_trajectory) {
        for (std::size_t k = 0; k < s.size(); ++k) out.mean[k] += s[k];
    }
    if (!out.per_trajectory.empty()) {
        for (double& v : out.mean) v /= static_cast<double>(out.per_trajectory.size());
    }
    return out;
}

double series_slope(std::span<const std::size_t> steps, std::span<const double> values, std::size_t begin,
                    std::size_t end) {
    if (end > values.size() || end > steps.size() || end < begin + 2) throw ValidationError("slope needs two points");
    const double count = static_cast<double>(end - begin);
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
        mx += static_cast<double>(steps[k]);
        my += values[k];
    }
    mx /= count;
    my /= count;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
        const double dx = static_cast<double>(steps[k]) - mx;
        sxy += dx * (values[k] - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

TraceStability trace_stability(const TraceSeries& series, double ratio) {
    const std::size_t k = series.steps.size();
    if (k < 8) throw ValidationError("trace stability needs at least eight checkpoints");
    const std::size_t q = k / 4;
    TraceStability s;
    s.first_slope = series_slope(series.steps, series.mean, 0, q);
    s.last_slope = series_slope(series.steps, series.mean, k - q, k);
    s.stabilized = std::abs(s.last_slope) < ratio * std::abs(s.first_slope);
    return s;
}

AcidSeries acid_cumsum(const PredictiveRule& rule, std::span<const double> x_star, std::size_t horizon,
                       std::size_t mc_draws, std::uint64_t seed, std::size_t workers) {
    const std::size_t n = rule.step();
    if (horizon < n) throw ValidationError("a.c.i.d. horizon must be at least n");
    if (mc_draws < 2) throw ValidationError("a.c.i.d. needs at least two Monte Carlo draws");
    AcidSeries out;
    auto main = rule.clone();
    RngStream main_rng(derive_seed(seed, {0}), 0);
    double running = 0.0;
    for (std::size_t i = n; i <= horizon; ++i) {
        const auto current = categorical_at(*main, x_star);
        const std::size_t k = current.size();
        std::vector<std::vector<double>> next(mc_draws);
        const std::uint64_t step_seed = derive_seed(seed, {1, i});
        parallel_for(mc_draws, workers, [&](std::size_t m) {
            auto copy = main->clone();
            RngStream rng(step_seed, m);
            copy->advance(x_star, rng);
            next[m] = categorical_at(*copy, x_star);
        });
        double term = 0.0;
        double se = 0.0;
        const double count = static_cast<double>(mc_draws);
        for (std::size_t y = 0; y < k; ++y) {
            double mean = 0.0;
            for (const auto& p : next) mean += p.at(y);
            mean /= count;
            double ss = 0.0;
            for (const auto& p : next) ss += (p[y] - mean) * (p[y] - mean);
            term += std::abs(mean - current[y]);
            se += std::sqrt(ss / (count - 1.0) / count);
        }
        running += term;
        out.steps.push_back(i);
        out.terms.push_back(term);
        out.standard_errors.push_back(se);
        out.cumulative.push_back(running);
        if (i < horizon) main->advance(x_star, main_rng);
    }
    return out;
}

std::vector<ConcentrationPoint> concentration_sweep(const SyntheticSetup& setup, const RuleConfig& rule,
                                                    std::span<const std::size_t> sizes, std::size_t forward_steps,
                                                    std::size_t draws, std::uint64_t seed, std::size_t workers) {
    for (std::size_t k = 1; k < sizes.size(); ++k) {
        if (sizes[k] <= sizes[k - 1]) throw ValidationError("concentration grid must be increasing");
    }
    const auto params = analytic_standardization(setup);
    std::vector<ConcentrationPoint> out;
    for (const std::size_t n : sizes) {
        RngStream data_rng(derive_seed(seed, {n, 0}), 0);
        const DesignMatrix design = encode(generate(setup, data_rng, n), params);
        const LossSpec loss = LossSpec::for_design(design, std::vector<bool>(design.cols(), true));
        EngineConfig config;
        config.forward_steps = forward_steps;
        config.draws = draws;
        config.seed = derive_seed(seed, {n, 1});
        config.workers = workers;
        const auto posterior = run_mgp(design, rule, loss, config);
        ConcentrationPoint point;
        point.n = n;
        point.draws = posterior.usable();
        if (point.draws.rows() > 0) point.mean = point.draws.colwise().mean().transpose();
        if (point.draws.rows() >= 2) {
            const Eigen::MatrixXd c = point.draws.rowwise() - point.mean.transpose();
            point.sd = (c.array().square().colwise().sum() / static_cast<double>(c.rows() - 1)).sqrt().transpose();
        }
        out.push_back(std::move(point));
    }
    return out;
}

void write_trace_csv(const std::filesystem::path& path, const TraceSeries& series) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "step,value,trajectory\n";
    for (std::size_t t = 0; t < series.per_trajectory.size(); ++t) {
        for (std::size_t k = 0; k < series.steps.size(); ++k) {
            out << series.steps[k] << ',' << format_number(series.per_trajectory[t][k]) << ','
                << series.trajectory_ids[t] << '\n';
        }
    }
    for (std::size_t k = 0; k < series.steps.size(); ++k) {
        out << series.steps[k] << ',' << format_number(series.mean[k]) << ",mean\n";
    }
}

void write_acid_csv(const std::filesystem::path& path, const AcidSeries& series) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "step,term,standard_error,cumulative\n";
    for (std::size_t k = 0; k < series.steps.size(); ++k) {
        out << series.steps[k] << ',' << format_number(series.terms[k]) << ','
            << format_number(series.standard_errors[k]) << ',' << format_number(series.cumulative[k]) << '\n';
    }
}

}  // namespace mgp
