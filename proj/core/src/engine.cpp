#include "mgp/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "mgp/copula.hpp"
#include "mgp/error.hpp"
#include "mgp/format.hpp"
#include "mgp/parallel.hpp"

namespace mgp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TrajectoryContext {
    const DesignMatrix& data;
    const PredictiveRule& rule;
    const LossSpec& loss;
    const EngineConfig& config;
    const std::vector<std::size_t>& steps;
    const FitResult& data_fit;
    std::size_t depth;
};

// Rows of the design stacked in the given order.
RowMatrix gather(const DesignMatrix& data, std::span<const std::size_t> rows) {
    RowMatrix x(static_cast<Eigen::Index>(rows.size()), data.x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = data.x.row(static_cast<Eigen::Index>(rows[i]));
    return x;
}

class FunctionalEvaluator {
public:
    FunctionalEvaluator(const TrajectoryContext& ctx, RngStream& rng)
        : ctx_(ctx), n_(ctx.data.rows()), repeats_(std::max<std::size_t>(ctx.config.refit_repeats, 1)) {
        if (ctx.rule.functional_mode() == FunctionalMode::predictive_refit) {
            // Common uniforms across checkpoints keep the refit trace smooth in m.
            uniforms_.resize(n_ * repeats_);
            for (double& u : uniforms_) u = rng.uniform_open();
            std::vector<std::size_t> rows;
            rows.reserve(n_ * repeats_);
            for (std::size_t j = 0; j < n_; ++j) rows.insert(rows.end(), repeats_, j);
            refit_x_ = gather(ctx.data, rows);
        }
    }

    FitResult evaluate(const PredictiveRule& rule, std::size_t step, std::span<const std::size_t> gen_rows,
                       std::span<const double> gen_y) {
        if (step == n_) return ctx_.data_fit;
        const Eigen::VectorXd* warm = warm_.size() > 0 ? &warm_ : &ctx_.data_fit.theta;
        FitResult result;
        switch (rule.functional_mode()) {
            case FunctionalMode::pooled_counts: {
                const auto& bb = dynamic_cast<const BayesianBootstrapRule&>(rule);
                const auto counts = bb.counts(n_);
                result = fit(ctx_.loss, ctx_.data.x, ctx_.data.y, counts, warm);
                break;
            }
            case FunctionalMode::augmented_sample: {
                RowMatrix x(static_cast<Eigen::Index>(n_ + gen_rows.size()), ctx_.data.x.cols());
                Eigen::VectorXd y(x.rows());
                x.topRows(static_cast<Eigen::Index>(n_)) = ctx_.data.x;
                y.head(static_cast<Eigen::Index>(n_)) = ctx_.data.y;
                for (std::size_t i = 0; i < gen_rows.size(); ++i) {
                    const auto r = static_cast<Eigen::Index>(n_ + i);
                    x.row(r) = ctx_.data.x.row(static_cast<Eigen::Index>(gen_rows[i]));
                    y(r) = gen_y[i];
                }
                result = fit(ctx_.loss, x, y, {}, warm);
                break;
            }
            case FunctionalMode::predictive_refit: {
                Eigen::VectorXd y(static_cast<Eigen::Index>(n_ * repeats_));
                const auto* continuous = dynamic_cast<const ContinuousCopulaRule*>(&rule);
                std::vector<double> weights;
                for (std::size_t j = 0; j < n_; ++j) {
                    const auto xj = ctx_.data.features(j);
                    if (continuous) continuous->weights(xj, j, weights);
                    for (std::size_t r = 0; r < repeats_; ++r) {
                        const std::size_t k = j * repeats_ + r;
                        double v;
                        if (continuous) {
                            v = continuous->inverse(weights, uniforms_[k]);
                        } else {
                            v = rule.draw_with_uniform(xj, uniforms_[k], j);
                        }
                        y(static_cast<Eigen::Index>(k)) = v;
                    }
                }
                result = fit(ctx_.loss, refit_x_, y, {}, warm);
                break;
            }
        }
        warm_ = result.theta;
        return result;
    }

private:
    const TrajectoryContext& ctx_;
    std::size_t n_;
    std::size_t repeats_;
    std::vector<double> uniforms_;
    RowMatrix refit_x_;
    Eigen::VectorXd warm_;
};

Trajectory run_trajectory(const TrajectoryContext& ctx, std::size_t index) {
    Trajectory t;
    t.index = index;
    const std::size_t n = ctx.data.rows();
    RngStream rng(ctx.config.seed, index);
    const auto rule = ctx.rule.clone();
    const FunctionalMode mode = rule->functional_mode();
    FunctionalEvaluator evaluator(ctx, rng);

    auto* bb = mode == FunctionalMode::pooled_counts ? dynamic_cast<BayesianBootstrapRule*>(rule.get()) : nullptr;
    if (mode == FunctionalMode::pooled_counts && !bb) throw ValidationError("pooled-count functional needs a bootstrap rule");
    const bool need_y = mode == FunctionalMode::augmented_sample || ctx.config.keep_pairs;

    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    pool.reserve(ctx.depth);
    std::vector<std::size_t> gen_rows;
    std::vector<double> gen_y;
    gen_rows.reserve(ctx.depth - n);
    gen_y.reserve(ctx.depth - n);

    auto next_checkpoint = ctx.steps.begin();
    auto checkpoint = [&](std::size_t m) {
        FitResult r = evaluator.evaluate(*rule, m, gen_rows, gen_y);
        if (ctx.config.keep_checkpoints) t.checkpoints.push_back({m, r.theta, r.converged});
        if (m == ctx.depth) {
            t.theta = std::move(r.theta);
            t.converged = r.converged;
        }
    };

    if (next_checkpoint != ctx.steps.end() && *next_checkpoint == n) {
        checkpoint(n);
        ++next_checkpoint;
    }
    for (std::size_t i = n; i < ctx.depth; ++i) {
        std::size_t row;
        double y;
        if (bb) {
            row = bb->sample_row(rng);
            bb->update_row(row);
            y = ctx.data.y(static_cast<Eigen::Index>(row));
        } else {
            row = pool[feature_pool_sample(pool, rng)];
            y = rule->advance(ctx.data.features(row), rng, need_y, row);
            pool.push_back(row);
        }
        gen_rows.push_back(row);
        gen_y.push_back(y);
        const std::size_t m = i + 1;
        if (next_checkpoint != ctx.steps.end() && *next_checkpoint == m) {
            checkpoint(m);
            ++next_checkpoint;
        }
    }
    if (ctx.config.keep_pairs) {
        t.rows = std::move(gen_rows);
        t.responses = std::move(gen_y);
    }
    return t;
}

}  // namespace

std::size_t PosteriorDraws::failed_count() const noexcept {
    return static_cast<std::size_t>(std::count(failed.begin(), failed.end(), true));
}

std::size_t PosteriorDraws::nonconverged_count() const noexcept {
    std::size_t c = 0;
    for (std::size_t l = 0; l < converged.size(); ++l) c += !failed[l] && !converged[l];
    return c;
}

Eigen::MatrixXd PosteriorDraws::usable() const {
    std::vector<Eigen::Index> keep;
    for (std::size_t l = 0; l < size(); ++l) {
        if (!failed[l] && converged[l]) keep.push_back(static_cast<Eigen::Index>(l));
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), draws.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = draws.row(keep[i]);
    return out;
}

std::size_t feature_pool_sample(std::span<const std::size_t> pool, RngStream& rng) {
    if (pool.empty()) throw ValidationError("feature pool is empty");
    return static_cast<std::size_t>(rng.index(pool.size()));
}

std::vector<std::size_t> checkpoint_steps(std::size_t n, std::size_t depth, std::size_t stride,
                                          std::span<const std::size_t> extra) {
    std::vector<std::size_t> steps;
    if (stride > 0) {
        for (std::size_t m = n; m < depth; m += stride) steps.push_back(m);
    }
    for (const std::size_t m : extra) {
        if (m < n || m > depth) throw ValidationError("checkpoint " + std::to_string(m) + " outside [n, N]");
        steps.push_back(m);
    }
    steps.push_back(depth);
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    return steps;
}

PosteriorDraws run_mgp(const DesignMatrix& data, const PredictiveRule& rule, const LossSpec& loss,
                       const EngineConfig& config) {
    const std::size_t n = data.rows();
    if (n == 0) throw ValidationError("dataset is empty");
    if (config.draws == 0) throw ValidationError("need at least one draw");
    if (rule.step() != n) throw ValidationError("rule must be conditioned on exactly the dataset rows");
    loss.validate(data);
    const std::size_t depth = n + config.forward_steps.value_or(default_forward_steps(rule.kind()));
    const auto steps = checkpoint_steps(n, depth, config.checkpoint_stride, config.extra_checkpoints);

    const FitResult data_fit = fit(loss, data.x, data.y);
    const TrajectoryContext ctx{data, rule, loss, config, steps, data_fit, depth};

    std::vector<Trajectory> results(config.draws);
    parallel_for(config.draws, config.workers, [&](std::size_t l) {
        try {
            results[l] = run_trajectory(ctx, l);
        } catch (const Error& e) {
            results[l] = Trajectory{};
            results[l].index = l;
            results[l].failed = true;
            results[l].error = e.what();
        }
    });

    PosteriorDraws out;
    const auto p = static_cast<Eigen::Index>(loss.dim());
    out.draws = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(config.draws), p, kNaN);
    out.converged.assign(config.draws, false);
    out.failed.assign(config.draws, false);
    out.errors.assign(config.draws, {});
    out.coordinate_names = loss.coordinate_names(data.column_names);
    out.rule = rule.kind();
    out.n = n;
    out.depth = depth;
    out.seed = config.seed;
    out.theta_data = data_fit.theta;
    for (std::size_t l = 0; l < config.draws; ++l) {
        auto& t = results[l];
        if (!t.failed && t.theta.size() != p) {
            t.failed = true;
            t.error = "trajectory produced no final functional value";
        }
        out.failed[l] = t.failed;
        out.errors[l] = t.error;
        if (!t.failed) {
            out.draws.row(static_cast<Eigen::Index>(l)) = t.theta.transpose();
            out.converged[l] = t.converged && t.theta.allFinite();
        }
    }
    if (config.keep_checkpoints || config.keep_pairs) out.trajectories = std::move(results);
    return out;
}

PosteriorDraws run_mgp(const DesignMatrix& data, const RuleConfig& rule, const LossSpec& loss,
                       const EngineConfig& config) {
    const auto initialized = make_rule(rule, data, loss);
    EngineConfig c = config;
    if (!c.forward_steps && rule.forward_steps > 0) c.forward_steps = rule.forward_steps;
    return run_mgp(data, *initialized, loss, c);
}

void write_draws_csv(const std::filesystem::path& path, const PosteriorDraws& draws) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "trajectory";
    for (const auto& name : draws.coordinate_names) out << ',' << name;
    out << ",converged,failed\n";
    for (std::size_t l = 0; l < draws.size(); ++l) {
        out << l;
        for (Eigen::Index j = 0; j < draws.draws.cols(); ++j) {
            out << ',' << format_number(draws.draws(static_cast<Eigen::Index>(l), j));
        }
        out << ',' << (draws.converged[l] ? 1 : 0) << ',' << (draws.failed[l] ? 1 : 0) << '\n';
    }
}

void write_trajectories_csv(const std::filesystem::path& path, const PosteriorDraws& draws, const DesignMatrix& data) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "trajectory,step";
    for (std::size_t j = 1; j < data.column_names.size(); ++j) out << ',' << data.column_names[j];
    out << ",y\n";
    for (const auto& t : draws.trajectories) {
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            out << t.index << ',' << draws.n + i + 1;
            for (const double v : data.features(t.rows[i])) out << ',' << format_number(v);
            out << ',' << format_number(t.responses[i]) << '\n';
        }
    }
}

}  // namespace mgp
