#include <benchmark/benchmark.h>

#include <vector>

#include "mgp/copula.hpp"
#include "mgp/dgp.hpp"
#include "mgp/engine.hpp"
#include "mgp/functionals.hpp"
#include "mgp/normal.hpp"

using namespace mgp;

namespace {

DesignMatrix gaussian_design(std::size_t n) {
    SyntheticSetup s;
    s.name = "bench";
    s.dim = 10;
    RngStream beta_rng(1, 0);
    s.beta = draw_beta(10, beta_rng);
    RngStream rng(2, 0);
    return encode(generate(s, rng, n), analytic_standardization(s));
}

// Copula state after `steps` forward updates on the n = 20 gaussian design.
std::unique_ptr<PredictiveRule> grown_copula(const DesignMatrix& d, std::size_t steps) {
    auto rule = make_copula_rule(d, 0.8);
    RngStream rng(3, 0);
    for (std::size_t i = 0; i < steps; ++i) {
        const std::size_t a = rng.index(d.rows());
        rule->advance(d.features(a), rng, false, a);
    }
    return rule;
}

void BM_NormalQuantile(benchmark::State& state) {
    double p = 0.001;
    for (auto _ : state) {
        benchmark::DoNotOptimize(normal::quantile(p));
        p = p < 0.998 ? p + 0.001 : 0.001;
    }
}
BENCHMARK(BM_NormalQuantile);

void BM_BivariateCdf(benchmark::State& state) {
    double h = -2.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(normal::bivariate_cdf(h, 0.3, 0.8));
        h = h < 2.0 ? h + 0.01 : -2.0;
    }
}
BENCHMARK(BM_BivariateCdf);

void BM_CopulaCdf(benchmark::State& state) {
    const auto d = gaussian_design(20);
    const auto rule = grown_copula(d, static_cast<std::size_t>(state.range(0)));
    const auto& cop = dynamic_cast<const ContinuousCopulaRule&>(*rule);
    std::vector<double> w;
    cop.weights(d.features(0), 0, w);
    double y = -1.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cop.evaluate(w, y, nullptr));
        y = y < 1.0 ? y + 0.01 : -1.0;
    }
}
BENCHMARK(BM_CopulaCdf)->Arg(200)->Arg(2000);

void BM_CopulaInverse(benchmark::State& state) {
    const auto d = gaussian_design(20);
    const auto rule = grown_copula(d, static_cast<std::size_t>(state.range(0)));
    const auto& cop = dynamic_cast<const ContinuousCopulaRule&>(*rule);
    std::vector<double> w;
    cop.weights(d.features(0), 0, w);
    double u = 0.01;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cop.inverse(w, u));
        u = u < 0.98 ? u + 0.01 : 0.01;
    }
}
BENCHMARK(BM_CopulaInverse)->Arg(200)->Arg(2000);

void BM_Trajectory(benchmark::State& state) {
    const auto d = gaussian_design(20);
    const auto loss = LossSpec::for_design(d, std::vector<bool>(d.cols(), true));
    RuleConfig rc;
    rc.kind = state.range(0) == 0 ? RuleKind::bayesian_bootstrap : RuleKind::copula;
    EngineConfig cfg;
    cfg.forward_steps = 2000;
    cfg.draws = 1;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        cfg.seed = ++seed;
        benchmark::DoNotOptimize(run_mgp(d, rc, loss, cfg));
    }
    state.SetLabel(rc.kind == RuleKind::bayesian_bootstrap ? "bb" : "copula");
}
BENCHMARK(BM_Trajectory)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FitLogistic(benchmark::State& state) {
    const auto n = static_cast<Eigen::Index>(state.range(0));
    RngStream rng(4, 0);
    RowMatrix x(n, 11);
    Eigen::VectorXd labels(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        double eta = 0.2;
        for (Eigen::Index j = 1; j < 11; ++j) {
            x(i, j) = rng.normal();
            eta += 0.3 * x(i, j);
        }
        labels(i) = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
    const std::vector<bool> active(11, true);
    for (auto _ : state) benchmark::DoNotOptimize(fit_logistic(x, labels, 2, active));
}
BENCHMARK(BM_FitLogistic)->Arg(100)->Arg(2100)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
