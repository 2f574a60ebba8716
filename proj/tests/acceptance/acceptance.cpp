// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: mgp_acceptance [--workers N] [--out DIR] [criterion...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgp/diagnostics.hpp"
#include "mgp/engine.hpp"
#include "mgp/experiment.hpp"
#include "mgp/functionals.hpp"
#include "mgp/rng.hpp"
#include "mgp/rules.hpp"
#include "mgp/uq.hpp"

using namespace mgp;
using nlohmann::json;

namespace {

namespace tol {
constexpr double kMeanSe = 3.0;
constexpr double kVarianceRel = 0.25;
constexpr double kBbCoverageLo = 0.40;
constexpr double kBbCoverageHi = 0.70;
constexpr double kBbSizeLo = 0.04;
constexpr double kBbSizeHi = 0.15;
constexpr double kCopulaCoverageMin = 0.85;
constexpr double kCopulaSizeLo = 0.15;
constexpr double kCopulaSizeHi = 0.60;
constexpr double kRadius = 0.1;
constexpr double kChi2Df2 = 5.99;
constexpr double kGradientRel = 1e-5;
constexpr double kInterceptMle = 1e-6;
constexpr double kLinearOracle = 1e-6;
constexpr double kAcidSe = 3.0;
constexpr double kTelescope = 1e-9;
constexpr double kTraceRatio = 0.1;
}  // namespace tol

constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    std::size_t workers = 1;
    std::filesystem::path out;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

const ResultRow& row_of(const ExperimentResult& r, const std::string& rule) {
    for (const auto& row : r.rows) {
        if (row.rule == rule) return row;
    }
    throw std::runtime_error("no result row for rule " + rule);
}

json coverage_config(const std::string& name, const std::string& setup_kind, std::size_t reps, std::size_t draws,
                     const std::filesystem::path& out) {
    return json{{"name", name},
                {"seed", kSeed},
                {"alpha", 0.05},
                {"repetitions", reps},
                {"output_dir", out.string()},
                {"engine", {{"draws", draws}}},
                {"setups", json::array({{{"name", setup_kind}, {"kind", setup_kind}, {"dim", 10}}})},
                {"rules", json::array({{{"name", "bb"}, {"kind", "bb"}},
                                       {{"name", "copula"}, {"kind", "copula"}, {"bandwidth", 0.8}}})}};
}

ExperimentResult run_coverage(const json& j, std::size_t workers) {
    auto config = parse_config(j);
    RunOptions o;
    o.workers = workers;
    return run_experiment(apply_overrides(config, o));
}

Outcome bayes_equivalence(const Context& ctx) {
    const std::size_t n = 20;
    const double tau2 = 100.0;
    const double sigma2 = 1.0;
    RngStream rng(derive_seed(kSeed, {1}), 0);
    DesignMatrix d;
    d.x = RowMatrix::Ones(static_cast<Eigen::Index>(n), 1);
    d.y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) d.y(static_cast<Eigen::Index>(i)) = rng.normal(1.0, 1.0);
    d.column_names = {"intercept"};

    const double precision = 1.0 / tau2 + static_cast<double>(n) / sigma2;
    const double post_var = 1.0 / precision;
    const double post_mean = post_var * (d.y.sum() / sigma2);

    ConjugateNormalRule rule(0.0, tau2, sigma2);
    const std::vector<double> none;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) rule.update(none, d.y(i));
    EngineConfig cfg;
    cfg.forward_steps = 2000;
    cfg.draws = 500;
    cfg.seed = derive_seed(kSeed, {2});
    cfg.workers = ctx.workers;
    const auto out = run_mgp(d, rule, LossSpec::for_design(d, {}), cfg);
    const Eigen::VectorXd col = out.draws.col(0);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(col.size() - 1);
    const double se = std::sqrt(post_var / 500.0);
    const bool ok_mean = std::abs(mean - post_mean) <= tol::kMeanSe * se;
    const bool ok_var = std::abs(var / post_var - 1.0) <= tol::kVarianceRel;
    return {ok_mean && ok_var, "mean " + fmt("%.4f", mean) + " vs " + fmt("%.4f", post_mean) + " (|z|=" +
                                   fmt("%.2f", std::abs(mean - post_mean) / se) + "), variance ratio " +
                                   fmt("%.3f", var / post_var)};
}

struct Table1 {
    bool done = false;
    ResultRow bb;
    ResultRow copula;
};

Table1& table1(const Context& ctx) {
    static Table1 t;
    if (!t.done) {
        const auto r = run_coverage(coverage_config("acceptance-table1", "gaussian", 100, 100, ctx.out), ctx.workers);
        t.bb = row_of(r, "bb");
        t.copula = row_of(r, "copula");
        t.done = true;
    }
    return t;
}

Outcome table1_bb(const Context& ctx) {
    const auto& r = table1(ctx).bb;
    const bool ok = r.coverage >= tol::kBbCoverageLo && r.coverage <= tol::kBbCoverageHi &&
                    r.size_median >= tol::kBbSizeLo && r.size_median <= tol::kBbSizeHi;
    return {ok, "coverage " + fmt("%.2f", r.coverage) + ", size " + fmt("%.3f", r.size_median) + " over " +
                    std::to_string(r.repetitions) + " repetitions"};
}

Outcome table1_copula(const Context& ctx) {
    const auto& t = table1(ctx);
    const auto& r = t.copula;
    const bool ok = r.coverage >= tol::kCopulaCoverageMin && r.coverage > t.bb.coverage &&
                    r.size_median >= tol::kCopulaSizeLo && r.size_median <= tol::kCopulaSizeHi;
    return {ok, "coverage " + fmt("%.2f", r.coverage) + " (bb " + fmt("%.2f", t.bb.coverage) + "), size " +
                    fmt("%.3f", r.size_median)};
}

Outcome table2_copula(const Context& ctx) {
    const auto r = run_coverage(coverage_config("acceptance-table2", "logistic", 20, 100, ctx.out), ctx.workers);
    const auto& bb = row_of(r, "bb");
    const auto& cop = row_of(r, "copula");
    return {cop.size_median > bb.size_median, "size copula " + fmt("%.3f", cop.size_median) + " vs bb " +
                                                  fmt("%.3f", bb.size_median) + " (coverage " +
                                                  fmt("%.2f", cop.coverage) + " vs " + fmt("%.2f", bb.coverage) +
                                                  ", 20 repetitions)"};
}

Outcome ellipsoid(const Context&) {
    RngStream rng(derive_seed(kSeed, {3}), 0);
    Eigen::MatrixXd small(100, 3);
    for (Eigen::Index i = 0; i < small.rows(); ++i) {
        small(i, 0) = rng.normal();
        small(i, 1) = 3.0 * rng.normal() + small(i, 0);
        small(i, 2) = std::exp(rng.normal());
    }
    const auto set = joint_credible_set(small, 0.05);
    int inside = 0;
    for (Eigen::Index i = 0; i < small.rows(); ++i) inside += set.contains(small.row(i).transpose());
    Eigen::MatrixXd big(100000, 2);
    for (Eigen::Index i = 0; i < big.rows(); ++i) {
        big(i, 0) = rng.normal();
        big(i, 1) = rng.normal();
    }
    const double r2 = joint_credible_set(big, 0.05).radius2;
    return {inside == 95 && std::abs(r2 - tol::kChi2Df2) <= tol::kRadius,
            std::to_string(inside) + "/100 inside, r2 " + fmt("%.4f", r2)};
}

RowMatrix random_design(std::size_t n, std::size_t d, RngStream& rng) {
    RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 1));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < x.cols(); ++j) x(i, j) = rng.normal();
    }
    return x;
}

Eigen::VectorXd least_squares_gd(const RowMatrix& x, const Eigen::VectorXd& y) {
    const double n = static_cast<double>(x.rows());
    const Eigen::MatrixXd g = x.transpose() * x / n;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(g.cols());
    for (int i = 0; i < 500; ++i) v = (g * v).normalized();
    const double lipschitz = v.dot(g * v);
    const Eigen::VectorXd xty = x.transpose() * y / n;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(g.cols());
    for (int it = 0; it < 200000; ++it) {
        const Eigen::VectorXd grad = g * b - xty;
        if (grad.norm() < 1e-13) break;
        b -= grad / lipschitz;
    }
    return b;
}

Outcome optimizer(const Context&) {
    RngStream rng(derive_seed(kSeed, {4}), 0);
    double worst_grad = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t classes = 2 + static_cast<std::size_t>(trial % 3);
        const RowMatrix x = random_design(30, 3, rng);
        Eigen::VectorXd labels(30);
        for (Eigen::Index i = 0; i < 30; ++i) labels(i) = static_cast<double>(rng.index(classes));
        const std::vector<bool> active(4, true);
        Eigen::VectorXd theta(static_cast<Eigen::Index>(4 * (classes - 1)));
        for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = rng.normal();
        Eigen::VectorXd grad;
        logistic_objective(x, labels, classes, active, theta, 1e-8, &grad);
        Eigen::VectorXd fd(theta.size());
        const double h = 1e-6;
        for (Eigen::Index j = 0; j < theta.size(); ++j) {
            Eigen::VectorXd tp = theta, tm = theta;
            tp(j) += h;
            tm(j) -= h;
            fd(j) = (logistic_objective(x, labels, classes, active, tp, 1e-8) -
                     logistic_objective(x, labels, classes, active, tm, 1e-8)) /
                    (2.0 * h);
        }
        worst_grad = std::max(worst_grad, (grad - fd).norm() / std::max(1.0, grad.norm()));
    }

    Eigen::VectorXd labels(50);
    for (Eigen::Index i = 0; i < 50; ++i) labels(i) = i < 17 ? 1.0 : 0.0;
    const auto mle = fit_logistic(RowMatrix::Ones(50, 1), labels, 2, {true}, {.damping = 0.0});
    const double p = 17.0 / 50.0;
    const double mle_err = std::abs(mle.theta(0) - std::log(p / (1.0 - p)));

    double worst_linear = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const RowMatrix x = random_design(40, 4, rng);
        Eigen::VectorXd y(40);
        for (Eigen::Index i = 0; i < 40; ++i) y(i) = 0.5 - x(i, 1) + 2.0 * x(i, 3) + rng.normal();
        const auto fit = fit_linear(x, y, std::vector<bool>(5, true));
        worst_linear = std::max(worst_linear, (fit.theta - least_squares_gd(x, y)).cwiseAbs().maxCoeff());
    }
    const bool ok = worst_grad <= tol::kGradientRel && mle_err <= tol::kInterceptMle && worst_linear <= tol::kLinearOracle;
    return {ok, "gradient rel " + fmt("%.1e", worst_grad) + ", intercept MLE " + fmt("%.1e", mle_err) +
                    ", linear vs descent " + fmt("%.1e", worst_linear)};
}

Outcome winkler(const Context&) {
    const MarginalInterval unit{0.0, 1.0, 0.95};
    const bool exact = winkler_score(unit, 1.5, 0.05) == 21.0;
    const MarginalInterval iv{-0.3, 2.2, 0.95};
    const bool width = winkler_score(iv, 1.0, 0.05) == iv.upper - iv.lower &&
                       winkler_score(iv, iv.lower, 0.05) == iv.upper - iv.lower;
    return {exact && width, "[0,1] at 1.5 scores " + fmt("%.17g", winkler_score(unit, 1.5, 0.05))};
}

Outcome acid(const Context& ctx) {
    RngStream rng(derive_seed(kSeed, {5}), 0);
    auto inner = std::make_unique<ConjugateNormalRule>(0.0, 100.0, 1.0);
    const std::vector<double> none;
    for (int i = 0; i < 20; ++i) inner->update(none, rng.normal(1.0, 1.0));
    BinarizedRule rule(std::move(inner), 1.0);
    const auto s = acid_cumsum(rule, none, 70, 2000, derive_seed(kSeed, {6}), ctx.workers);
    double worst = 0.0;
    for (std::size_t k = 0; k < s.terms.size(); ++k) worst = std::max(worst, s.terms[k] / s.standard_errors[k]);

    DriftingBinaryRule drift;
    for (int i = 0; i < 10; ++i) drift.update(none, 1.0);
    const auto t = acid_cumsum(drift, none, 400, 20, derive_seed(kSeed, {7}), ctx.workers);
    double drift_err = 0.0;
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
        const double i = static_cast<double>(t.steps[k]);
        drift_err = std::max(drift_err, std::abs(t.cumulative[k] - 2.0 * (1.0 / 12.0 - 1.0 / (i + 3.0))));
    }
    return {worst <= tol::kAcidSe && drift_err <= tol::kTelescope,
            "conjugate max term/SE " + fmt("%.2f", worst) + " over " + std::to_string(s.terms.size()) +
                " steps, drifting error " + fmt("%.1e", drift_err)};
}

Outcome trace(const Context& ctx) {
    json j = coverage_config("acceptance-trace", "gaussian", 1, 100, ctx.out);
    j["diagnostics"] = {{"trace", json::array({{{"setup", "gaussian"}, {"rule", "bb"}, {"draws", 20}, {"checkpoint_stride", 50}},
                                               {{"setup", "gaussian"}, {"rule", "copula"}, {"draws", 20}, {"checkpoint_stride", 50}}})}};
    RunOptions o;
    o.workers = ctx.workers;
    const auto r = run_diagnostics(apply_overrides(parse_config(j), o));
    bool ok = r.traces.size() == 2;
    std::string detail;
    for (const auto& [name, s] : r.traces) {
        ok = ok && std::abs(s.last_slope) < tol::kTraceRatio * std::abs(s.first_slope);
        if (!detail.empty()) detail += ", ";
        detail += name + " ratio " + fmt("%.3f", std::abs(s.last_slope) / std::abs(s.first_slope));
    }
    return {ok, detail};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism(const Context& ctx) {
    const json j = coverage_config("acceptance-determinism", "gaussian", 4, 30, ctx.out);
    auto config = parse_config(j);
    RunOptions one;
    one.workers = 1;
    one.output_dir = ctx.out / "determinism-1";
    RunOptions eight;
    eight.workers = 8;
    eight.output_dir = ctx.out / "determinism-8";
    const auto a = run_experiment(apply_overrides(config, one));
    const auto b = run_experiment(apply_overrides(config, eight));
    const std::string ra = slurp(a.run_dir / "results.csv");
    const std::string rb = slurp(b.run_dir / "results.csv");
    return {!ra.empty() && ra == rb, std::to_string(ra.size()) + " bytes, " + (ra == rb ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
    Context ctx;
    ctx.workers = std::max(1u, std::thread::hardware_concurrency());
    ctx.out = std::filesystem::temp_directory_path() / "mgp-acceptance";
    std::vector<std::string> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--workers" && i + 1 < argc) {
            ctx.workers = std::stoul(argv[++i]);
        } else if (a == "--out" && i + 1 < argc) {
            ctx.out = argv[++i];
        } else {
            only.push_back(a);
        }
    }
    const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
        {"bayes_equivalence", bayes_equivalence},
        {"table1_bb", table1_bb},
        {"table1_copula", table1_copula},
        {"table2_copula_sets", table2_copula},
        {"ellipsoid", ellipsoid},
        {"optimizer", optimizer},
        {"winkler", winkler},
        {"acid", acid},
        {"convergence_trace", trace},
        {"determinism", determinism},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt("%.1f", secs) << " s]"
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
