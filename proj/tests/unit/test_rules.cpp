#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mgp/copula.hpp"
#include "mgp/distribution.hpp"
#include "mgp/error.hpp"
#include "mgp/rules.hpp"

using namespace mgp;

namespace {

// Independent reference helpers: erfc-based normal, bisection quantile,
// Plackett quadrature for the bivariate normal.
double ref_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double ref_quantile(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (ref_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double ref_bvn(double h, double k, double r) {
    const int intervals = 4000;
    auto phi2 = [&](double t) {
        const double s = 1.0 - t * t;
        return std::exp(-(h * h - 2.0 * t * h * k + k * k) / (2.0 * s)) / (2.0 * std::numbers::pi * std::sqrt(s));
    };
    const double step = r / intervals;
    double acc = phi2(0.0) + phi2(r);
    for (int i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * phi2(i * step);
    return ref_cdf(h) * ref_cdf(k) + acc * step / 3.0;
}

double ref_kernel(const std::vector<double>& a, const std::vector<double>& b, double rho) {
    double q = 1.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double num = rho * rho * (a[k] * a[k] + b[k] * b[k]) - 2.0 * rho * a[k] * b[k];
        q *= std::exp(-num / (2.0 * (1.0 - rho * rho))) / std::sqrt(1.0 - rho * rho);
    }
    return q;
}

double ref_weight(std::size_t m, const std::vector<double>& x, const std::vector<double>& xm, double rho) {
    const double alpha = (2.0 - 1.0 / m) / (m + 1.0);
    const double aq = alpha * ref_kernel(x, xm, rho);
    return aq / (1.0 - alpha + aq);
}

struct RefData {
    std::vector<std::vector<double>> x;
    std::vector<double> y;
};

// Continuous recursion from the definition, recomputing every v_m from scratch.
double ref_copula_cdf(const RefData& d, std::size_t upto, const std::vector<double>& x, double y, double rho) {
    std::vector<double> v(upto);
    auto cdf_at = [&](std::size_t m_count, const std::vector<double>& xq, double yq) {
        double u = ref_cdf(yq);
        for (std::size_t m = 0; m < m_count; ++m) {
            const double w = ref_weight(m + 1, xq, d.x[m], rho);
            const double h = ref_cdf((ref_quantile(u) - rho * ref_quantile(v[m])) / std::sqrt(1.0 - rho * rho));
            u = (1.0 - w) * u + w * h;
        }
        return u;
    };
    for (std::size_t m = 0; m < upto; ++m) v[m] = cdf_at(m, d.x[m], d.y[m]);
    return cdf_at(upto, x, y);
}

double ref_binary_prob(const RefData& d, double p0, const std::vector<double>& x, double rho) {
    std::vector<double> v(d.y.size());
    auto prob_at = [&](std::size_t m_count, const std::vector<double>& xq) {
        double p = p0;
        for (std::size_t m = 0; m < m_count; ++m) {
            const double w = ref_weight(m + 1, xq, d.x[m], rho);
            const double c = ref_bvn(ref_quantile(p), ref_quantile(v[m]), rho);
            const double t = d.y[m] > 0.5 ? c / v[m] : (p - c) / (1.0 - v[m]);
            p = (1.0 - w) * p + w * std::clamp(t, 0.0, 1.0);
        }
        return p;
    };
    for (std::size_t m = 0; m < d.y.size(); ++m) v[m] = prob_at(m, d.x[m]);
    return prob_at(d.y.size(), x);
}

DesignMatrix make_design(const RefData& d, std::size_t classes) {
    DesignMatrix m;
    const std::size_t n = d.y.size(), p = d.x[0].size();
    m.x.resize(n, p + 1);
    m.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        m.x(i, 0) = 1.0;
        for (std::size_t k = 0; k < p; ++k) m.x(i, k + 1) = d.x[i][k];
        m.y(i) = d.y[i];
    }
    m.column_names.push_back("(intercept)");
    for (std::size_t k = 0; k < p; ++k) m.column_names.push_back("x" + std::to_string(k + 1));
    m.num_classes = classes;
    return m;
}

RefData reference_data(std::size_t n, std::size_t p, bool binary, std::uint64_t seed) {
    RngStream rng(seed, 0);
    RefData d;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(p);
        for (auto& v : row) v = rng.normal();
        d.x.push_back(row);
        d.y.push_back(binary ? (rng.uniform() < 0.5 + 0.3 * std::tanh(row[0]) ? 1.0 : 0.0) : row[0] + 0.5 * rng.normal());
    }
    return d;
}

}  // namespace

TEST_CASE("copula alpha sequence") {
    CHECK(copula_alpha(1) == doctest::Approx(0.5));
    CHECK(copula_alpha(2) == doctest::Approx(0.5));
    CHECK(copula_alpha(3) == doctest::Approx(5.0 / 12.0));
    CHECK(copula_alpha(1000) * 1000.0 == doctest::Approx(2.0).epsilon(2e-3));
}

TEST_CASE("continuous copula matches the reference recursion") {
    const RefData d = reference_data(8, 2, false, 10);
    const auto design = make_design(d, 0);
    const double rho = 0.8;
    const auto rule = make_copula_rule(design, rho);
    const auto& cop = dynamic_cast<const ContinuousCopulaRule&>(*rule);
    CHECK(cop.step() == 8);
    CHECK(cop.functional_mode() == FunctionalMode::predictive_refit);
    for (std::size_t i = 0; i < 8; ++i) {
        for (const double y : {-1.5, 0.0, 0.8}) {
            CHECK(std::abs(cop.cdf(d.x[i], y, i) - ref_copula_cdf(d, 8, d.x[i], y, rho)) < 1e-9);
        }
    }
    const std::vector<double> free{0.3, -1.1};
    for (const double y : {-2.0, 0.4, 2.5}) {
        CHECK(std::abs(cop.cdf(free, y) - ref_copula_cdf(d, 8, free, y, rho)) < 1e-9);
    }
}

TEST_CASE("continuous copula cdf is a distribution") {
    const RefData d = reference_data(15, 3, false, 11);
    const auto rule = make_copula_rule(make_design(d, 0), 0.7);
    const auto& cop = dynamic_cast<const ContinuousCopulaRule&>(*rule);
    const std::vector<double> x{0.2, 0.1, -0.4};
    double prev = 0.0;
    double mass = 0.0;
    const double step = 0.001;
    for (double y = -10.0; y <= 10.0; y += step) {
        const double c = cop.cdf(x, y);
        CHECK(c >= prev);
        prev = c;
        mass += cop.density(x, y) * step;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
    const double e = 1e-5;
    for (const double y : {-1.0, 0.2, 1.7}) {
        const double fd = (cop.cdf(x, y + e) - cop.cdf(x, y - e)) / (2 * e);
        CHECK(cop.density(x, y) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("copula inverse and forward step are consistent") {
    const RefData d = reference_data(12, 2, false, 12);
    auto rule = make_copula_rule(make_design(d, 0), 0.8);
    auto& cop = dynamic_cast<ContinuousCopulaRule&>(*rule);
    for (const double u : {1e-6, 0.05, 0.5, 0.93, 1.0 - 1e-6}) {
        const double y = cop.draw_with_uniform(d.x[3], u, 3);
        CHECK(std::abs(cop.cdf(d.x[3], y, 3) - u) <= 1e-8);
    }
    RngStream a(3, 0), b(3, 0);
    const double y = cop.advance(d.x[5], a, true, 5);
    const double u = b.uniform_open();
    auto copy = make_copula_rule(make_design(d, 0), 0.8);
    CHECK(std::abs(dynamic_cast<ContinuousCopulaRule&>(*copy).cdf(d.x[5], y, 5) - u) <= 1e-8);
    CHECK(cop.records() == 13);
    CHECK(cop.step() == 13);
    // without a response the record is still appended
    CHECK(std::isnan(cop.advance(d.x[1], a, false, 1)));
    CHECK(cop.records() == 14);
}

TEST_CASE("zero bandwidth leaves the standard normal") {
    const RefData d = reference_data(6, 1, false, 13);
    const auto rule = make_copula_rule(make_design(d, 0), 0.0);
    const auto& cop = dynamic_cast<const ContinuousCopulaRule&>(*rule);
    // rho = 0: h(u, v) = u so every update is the identity
    for (const double y : {-1.0, 0.0, 2.0}) CHECK(cop.cdf(d.x[0], y, 0) == doctest::Approx(ref_cdf(y)).epsilon(1e-12));
}

TEST_CASE("binary copula matches the reference recursion") {
    const RefData d = reference_data(10, 2, true, 14);
    const auto design = make_design(d, 2);
    const double rho = 0.8;
    const auto rule = make_copula_rule(design, rho);
    const auto& cop = dynamic_cast<const BinaryCopulaRule&>(*rule);
    double freq = 0.0;
    for (const double y : d.y) freq += y;
    freq = std::clamp(freq / 10.0, 0.01, 0.99);
    CHECK(cop.initial_probability() == doctest::Approx(freq));
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(std::abs(cop.probability(d.x[i], i) - ref_binary_prob(d, freq, d.x[i], rho)) < 1e-8);
    }
    const std::vector<double> free{-0.5, 0.9};
    CHECK(std::abs(cop.probability(free) - ref_binary_prob(d, freq, free, rho)) < 1e-8);
    // anchor lookup through the feature vector hits the cache
    CHECK(cop.probability(d.x[4]) == cop.probability(d.x[4], 4));

    auto dist = cop.predict(d.x[0], 0);
    REQUIRE(dist.has_value());
    const auto& cat = std::get<Categorical>(*dist);
    CHECK(cat.probs[0] + cat.probs[1] == doctest::Approx(1.0));
}

TEST_CASE("copula rejects multinomial responses") {
    RefData d = reference_data(6, 1, true, 15);
    d.y[0] = 2.0;
    CHECK_THROWS_AS(make_copula_rule(make_design(d, 3), 0.8), UnsupportedOperation);
}

TEST_CASE("bayesian bootstrap pool grows by resampling") {
    BayesianBootstrapRule bb(4);
    CHECK(bb.step() == 4);
    CHECK(bb.pool() == std::vector<std::size_t>{0, 1, 2, 3});
    RngStream rng(1, 0);
    std::vector<int> hits(4, 0);
    for (int i = 0; i < 40000; ++i) ++hits[bb.sample_row(rng)];
    for (const int h : hits) CHECK(std::abs(h - 10000) < 500);
    bb.update_row(2);
    bb.update_row(2);
    CHECK(bb.counts(4) == std::vector<double>{1, 1, 3, 1});
    CHECK(bb.step() == 6);
    const std::vector<double> x{0.0};
    CHECK_THROWS_AS(bb.draw_with_uniform(x, 0.5, kNoAnchor), UnsupportedOperation);
}

TEST_CASE("conjugate rule equals the batch posterior") {
    ConjugateNormalRule rule(0.5, 100.0, 2.0);
    RngStream rng(30, 0);
    std::vector<double> ys(50);
    for (double& y : ys) y = rng.normal(1.0, 1.5);
    const std::vector<double> x;
    for (const double y : ys) rule.update(x, y);
    double sum = 0.0;
    for (const double y : ys) sum += y;
    const double var = 1.0 / (1.0 / 100.0 + ys.size() / 2.0);
    const double mean = var * (0.5 / 100.0 + sum / 2.0);
    CHECK(std::abs(rule.posterior_variance() - var) < 1e-10);
    CHECK(std::abs(rule.posterior_mean() - mean) < 1e-10);
    CHECK(rule.predictive_variance() == doctest::Approx(var + 2.0));
    const double q = rule.draw_with_uniform(x, 0.975, kNoAnchor);
    CHECK(q == doctest::Approx(mean + 1.959963984540054 * std::sqrt(var + 2.0)).epsilon(1e-9));
}

TEST_CASE("plug-in gaussian rule refits least squares") {
    const RefData d = reference_data(20, 2, false, 16);
    const auto design = make_design(d, 0);
    const auto loss = LossSpec::for_design(design, {});
    RuleConfig cfg;
    cfg.kind = RuleKind::plugin;
    auto rule = make_rule(cfg, design, loss);
    auto& plug = dynamic_cast<PluginRule&>(*rule);
    const auto direct = fit_linear(design.x, design.y, loss.active);
    CHECK((plug.theta() - direct.theta).norm() < 1e-10);
    const std::vector<double> x{0.5, -0.2};
    const double mean = direct.theta(0) + 0.5 * direct.theta(1) - 0.2 * direct.theta(2);
    CHECK(plug.draw_with_uniform(x, 0.5, kNoAnchor) == doctest::Approx(mean).epsilon(1e-10));
    plug.update(x, 3.0);
    DesignMatrix grown = design;
    grown.x.conservativeResize(21, 3);
    grown.y.conservativeResize(21);
    grown.x.row(20) << 1.0, 0.5, -0.2;
    grown.y(20) = 3.0;
    CHECK((plug.theta() - fit_linear(grown.x, grown.y, loss.active).theta).norm() < 1e-10);
}

TEST_CASE("plug-in logistic rule predicts softmax probabilities") {
    const RefData d = reference_data(40, 2, true, 17);
    const auto design = make_design(d, 2);
    const auto loss = LossSpec::for_design(design, {});
    RuleConfig cfg;
    cfg.kind = RuleKind::plugin;
    const auto rule = make_rule(cfg, design, loss);
    const auto& plug = dynamic_cast<const PluginRule&>(*rule);
    const auto direct = fit_logistic(design.x, design.y, 2, loss.active, {.damping = loss.damping});
    CHECK((plug.theta() - direct.theta).norm() < 1e-6);
    const auto dist = plug.predict(d.x[0], kNoAnchor);
    const auto& cat = std::get<Categorical>(*dist);
    const double eta = direct.theta(0) + d.x[0][0] * direct.theta(1) + d.x[0][1] * direct.theta(2);
    CHECK(cat.probs[1] == doctest::Approx(1.0 / (1.0 + std::exp(-eta))).epsilon(1e-6));

    RuleConfig wrong = cfg;
    wrong.plugin_model = PluginModel::gaussian_linear;
    CHECK_THROWS_AS(make_rule(wrong, design, loss), ValidationError);
}

TEST_CASE("mock rules follow their closed forms") {
    const std::vector<double> x{0.0};
    ConstantCategoricalRule c({0.3, 0.7});
    const auto constant = c.predict(x, kNoAnchor);
    CHECK(std::get<Categorical>(*constant).probs[1] == 0.7);

    DriftingBinaryRule drift;
    RngStream rng(1, 0);
    for (int i = 0; i < 5; ++i) {
        const auto dist = drift.predict(x, kNoAnchor);
        const double p = std::get<Categorical>(*dist).probs[1];
        CHECK(p == doctest::Approx(0.5 + 1.0 / (i + 2.0)));
        drift.advance(x, rng);
    }

    PolyaUrnRule urn;
    urn.update(x, 1.0);
    urn.update(x, 0.0);
    urn.update(x, 1.0);
    const auto urn_dist = urn.predict(x, kNoAnchor);
    CHECK(std::get<Categorical>(*urn_dist).probs[1] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("binarized conjugate rule reports the threshold probability") {
    auto inner = std::make_unique<ConjugateNormalRule>(0.0, 1.0, 1.0);
    const std::vector<double> x;
    inner->update(x, 0.7);
    const double m = inner->posterior_mean(), s = std::sqrt(inner->predictive_variance());
    BinarizedRule rule(std::move(inner), 0.25);
    const auto dist = rule.predict(x, kNoAnchor);
    const auto& cat = std::get<Categorical>(*dist);
    CHECK(cat.probs[0] == doctest::Approx(ref_cdf((0.25 - m) / s)).epsilon(1e-12));
    CHECK(cat.probs[0] + cat.probs[1] == doctest::Approx(1.0));
    RngStream rng(2, 0);
    const double y = rule.advance(x, rng);
    CHECK(std::isfinite(y));
    CHECK(rule.step() == 2);
    CHECK(rule.inner().step() == 2);
}

TEST_CASE("distributions validate, sample and invert") {
    CHECK_NOTHROW(validate(Categorical{{0.2, 0.8}}));
    CHECK_THROWS_AS(validate(Categorical{{0.2, 0.7}}), ProtocolError);
    CHECK_THROWS_AS(validate(Categorical{{-0.1, 1.1}}), ProtocolError);
    CHECK_THROWS_AS(validate(BinnedContinuous{{0, 1, 1}, {0.5, 0.5}}), ProtocolError);
    CHECK_THROWS_AS(validate(BinnedContinuous{{0, 1}, {0.5, 0.5}}), ProtocolError);

    const BinnedContinuous b{{0.0, 1.0, 3.0}, {0.25, 0.75}};
    CHECK(quantile(b, 0.125) == doctest::Approx(0.5));
    CHECK(quantile(b, 0.625) == doctest::Approx(2.0));

    const PredictedDistribution c = Categorical{{0.3, 0.7}};
    RngStream rng(4, 0);
    int ones = 0;
    for (int i = 0; i < 20000; ++i) ones += sample(c, rng) == 1.0;
    CHECK(std::abs(ones / 20000.0 - 0.7) < 4.0 * std::sqrt(0.21 / 20000.0));
}

TEST_CASE("rule names round-trip") {
    for (const auto k : {RuleKind::bayesian_bootstrap, RuleKind::copula, RuleKind::plugin, RuleKind::conjugate,
                         RuleKind::external, RuleKind::mock_constant, RuleKind::mock_drifting, RuleKind::mock_polya}) {
        CHECK(parse_rule_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_rule_kind("nope"), ValidationError);
    CHECK(default_forward_steps(RuleKind::external) == 500);
    CHECK(default_forward_steps(RuleKind::copula) == 2000);
}

TEST_CASE("alpha schedule sums diverge while squares converge") {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t m = 1; m <= 1000000; ++m) {
        const double a = copula_alpha(m);
        s1 += a;
        s2 += a * a;
    }
    CHECK(s1 / std::log(1e6) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(s2 < 7.0);
}

TEST_CASE("copula cdf stays monotone under random updates") {
    const RefData d = reference_data(10, 2, false, 31);
    auto rule = make_copula_rule(make_design(d, 0), 0.8);
    auto& cop = dynamic_cast<ContinuousCopulaRule&>(*rule);
    RngStream rng(32, 0);
    for (int i = 0; i < 40; ++i) cop.advance(d.x[rng.index(10)], rng, false);
    const std::vector<double> x{0.1, -0.7};
    for (int k = 0; k < 1000; ++k) {
        double y1 = rng.normal(0.0, 3.0), y2 = rng.normal(0.0, 3.0);
        if (y1 > y2) std::swap(y1, y2);
        CHECK(cop.cdf(x, y1) <= cop.cdf(x, y2) + 1e-12);
    }
}

TEST_CASE("binary copula probabilities stay in the unit interval") {
    const RefData d = reference_data(12, 2, true, 33);
    auto rule = make_copula_rule(make_design(d, 2), 0.9);
    auto& cop = dynamic_cast<BinaryCopulaRule&>(*rule);
    RngStream rng(34, 0);
    for (int i = 0; i < 500; ++i) {
        const std::size_t a = rng.index(12);
        cop.update(d.x[a], rng.uniform() < 0.5 ? 1.0 : 0.0, a);
    }
    for (std::size_t a = 0; a < 12; ++a) {
        const double p = cop.probability(d.x[a], a);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    const std::vector<double> free{3.0, -2.0};
    const double p = cop.probability(free);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
}

TEST_CASE("zero bandwidth is the identity after arbitrary updates") {
    const RefData d = reference_data(5, 2, false, 35);
    auto rule = make_copula_rule(make_design(d, 0), 0.0);
    auto& cop = dynamic_cast<ContinuousCopulaRule&>(*rule);
    RngStream rng(36, 0);
    const std::vector<double> free{0.4, 0.4};
    for (int i = 0; i < 30; ++i) cop.update(free, rng.normal(0.0, 4.0));
    for (const double y : {-2.0, -0.1, 0.9, 3.0}) CHECK(std::abs(cop.cdf(d.x[1], y, 1) - ref_cdf(y)) < 1e-10);
}

TEST_CASE("plug-in initialization is deterministic") {
    const RefData d = reference_data(30, 2, true, 37);
    const auto design = make_design(d, 2);
    const auto loss = LossSpec::for_design(design, {});
    RuleConfig cfg;
    cfg.kind = RuleKind::plugin;
    const auto a = make_rule(cfg, design, loss);
    const auto b = make_rule(cfg, design, loss);
    CHECK((dynamic_cast<const PluginRule&>(*a).theta() - dynamic_cast<const PluginRule&>(*b).theta()).norm() <= 1e-12);
}
