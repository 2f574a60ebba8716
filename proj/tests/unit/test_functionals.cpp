#include "doctest.h"

#include <cmath>
#include <vector>

#include "mgp/error.hpp"
#include "mgp/functionals.hpp"
#include "mgp/rng.hpp"

using namespace mgp;

namespace {

RowMatrix random_design(std::size_t n, std::size_t d, RngStream& rng) {
    RowMatrix x(n, d + 1);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        for (std::size_t j = 1; j <= d; ++j) x(i, j) = rng.normal();
    }
    return x;
}

// Plain gradient descent on 0.5|y - Xb|^2 / n with step 1/L, L the largest
// eigenvalue of X'X/n from power iteration.
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

}  // namespace

TEST_CASE("fit_linear agrees with a gradient-descent oracle") {
    RngStream rng(1, 0);
    for (int trial = 0; trial < 5; ++trial) {
        const RowMatrix x = random_design(40, 4, rng);
        Eigen::VectorXd y(40);
        for (int i = 0; i < 40; ++i) y(i) = 0.5 - x(i, 1) + 2.0 * x(i, 3) + rng.normal();
        const auto fit = fit_linear(x, y, std::vector<bool>(5, true));
        CHECK(fit.converged);
        const Eigen::VectorXd oracle = least_squares_gd(x, y);
        for (int j = 0; j < 5; ++j) CHECK(std::abs(fit.theta(j) - oracle(j)) < 1e-6);
    }
}

TEST_CASE("fit_linear integer weights equal duplicated rows") {
    RngStream rng(2, 0);
    const RowMatrix x = random_design(12, 2, rng);
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) y(i) = rng.normal();
    std::vector<double> w(12);
    std::vector<Eigen::Index> expanded;
    for (int i = 0; i < 12; ++i) {
        w[i] = static_cast<double>(i % 3);
        for (int k = 0; k < i % 3; ++k) expanded.push_back(i);
    }
    const RowMatrix xe = x(expanded, Eigen::all);
    const Eigen::VectorXd ye = y(expanded);
    const auto a = fit_linear(x, y, {true, true, true}, w);
    const auto b = fit_linear(xe, ye, {true, true, true});
    for (int j = 0; j < 3; ++j) CHECK(a.theta(j) == doctest::Approx(b.theta(j)).epsilon(1e-10));
}

TEST_CASE("fit_linear respects the column mask") {
    RngStream rng(3, 0);
    const RowMatrix x = random_design(30, 3, rng);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) y(i) = x(i, 1) + rng.normal();
    const auto masked = fit_linear(x, y, {true, true, false, true});
    CHECK(masked.theta.size() == 3);
    RowMatrix sub(30, 3);
    sub << x.col(0), x.col(1), x.col(3);
    const auto direct = fit_linear(sub, y, {true, true, true});
    CHECK((masked.theta - direct.theta).norm() < 1e-12);
    CHECK_THROWS_AS(fit_linear(x, y, {true, true}), ValidationError);
}

TEST_CASE("logistic gradient matches central differences") {
    RngStream rng(4, 0);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t classes = 2 + trial % 3;
        const RowMatrix x = random_design(25, 3, rng);
        Eigen::VectorXd labels(25);
        for (int i = 0; i < 25; ++i) labels(i) = static_cast<double>(rng.index(classes));
        const std::vector<bool> active(4, true);
        Eigen::VectorXd theta(4 * (classes - 1));
        for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = rng.normal();
        Eigen::VectorXd grad;
        logistic_objective(x, labels, classes, active, theta, 1e-3, &grad);
        Eigen::VectorXd fd(theta.size());
        const double h = 1e-6;
        for (Eigen::Index j = 0; j < theta.size(); ++j) {
            Eigen::VectorXd tp = theta, tm = theta;
            tp(j) += h;
            tm(j) -= h;
            fd(j) = (logistic_objective(x, labels, classes, active, tp, 1e-3) -
                     logistic_objective(x, labels, classes, active, tm, 1e-3)) /
                    (2 * h);
        }
        CHECK((grad - fd).norm() / std::max(1.0, grad.norm()) <= 1e-5);
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("intercept-only logistic MLE is the logit of the class frequency") {
    RowMatrix x = RowMatrix::Ones(40, 1);
    Eigen::VectorXd labels(40);
    for (int i = 0; i < 40; ++i) labels(i) = i < 13 ? 1.0 : 0.0;
    const auto fit = fit_logistic(x, labels, 2, {true}, {.damping = 0.0});
    CHECK(fit.converged);
    const double p = 13.0 / 40.0;
    CHECK(std::abs(fit.theta(0) - std::log(p / (1 - p))) < 1e-6);

    // three classes: log(p_k / p_0)
    Eigen::VectorXd l3(30);
    for (int i = 0; i < 30; ++i) l3(i) = i < 5 ? 0.0 : (i < 15 ? 1.0 : 2.0);
    const auto fit3 = fit_logistic(RowMatrix::Ones(30, 1), l3, 3, {true}, {.damping = 0.0});
    CHECK(std::abs(fit3.theta(0) - std::log(10.0 / 5.0)) < 1e-6);
    CHECK(std::abs(fit3.theta(1) - std::log(15.0 / 5.0)) < 1e-6);
}

TEST_CASE("logistic fit reaches a stationary point") {
    RngStream rng(5, 0);
    const RowMatrix x = random_design(200, 3, rng);
    Eigen::VectorXd labels(200);
    for (int i = 0; i < 200; ++i) {
        const double eta = 0.3 + x(i, 1) - 0.5 * x(i, 2);
        labels(i) = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
    const std::vector<bool> active(4, true);
    const auto fit = fit_logistic(x, labels, 2, active);
    CHECK(fit.converged);
    Eigen::VectorXd grad;
    logistic_objective(x, labels, 2, active, fit.theta, 1e-8, &grad);
    CHECK(grad.norm() < 1e-6);

    // warm start from the optimum converges immediately
    LogisticOptions warm;
    warm.warm_start = &fit.theta;
    const auto again = fit_logistic(x, labels, 2, active, warm);
    CHECK(again.iterations <= 1);
    CHECK((again.theta - fit.theta).norm() < 1e-8);
}

TEST_CASE("separable data stays finite under damping") {
    RowMatrix x(6, 2);
    x << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
    Eigen::VectorXd labels(6);
    labels << 0, 0, 0, 1, 1, 1;
    const auto fit = fit_logistic(x, labels, 2, {true, true}, {.damping = 1e-8});
    CHECK(fit.theta.allFinite());
    CHECK(fit.theta(1) > 1.0);
}

TEST_CASE("softmax probabilities are normalized") {
    Eigen::VectorXd theta(4);
    theta << 0.2, -1.0, 0.5, 0.3;
    const std::vector<double> row{1.0, 2.0};
    const Eigen::VectorXd p = softmax_probabilities(row, {true, true}, 3, theta);
    CHECK(p.size() == 3);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
    const double e1 = std::exp(0.2 - 2.0), e2 = std::exp(0.5 + 0.6);
    CHECK(p(0) == doctest::Approx(1.0 / (1 + e1 + e2)));
}

TEST_CASE("collinear columns are pruned") {
    RngStream rng(6, 0);
    RowMatrix x = random_design(50, 3, rng);
    CHECK(condition_number(x, {true, true, true, true}) < 10.0);
    x.col(3) = 2.0 * x.col(1) + 1e-12 * x.col(2);
    const auto mask = prune_collinear(x, 1e8);
    CHECK(mask[0]);
    CHECK(mask[2]);
    CHECK((mask[1] != mask[3]));
    CHECK(condition_number(x, mask) < 1e8);

    RowMatrix orth(4, 2);
    orth << 1, 1, 1, -1, 1, 1, 1, -1;
    CHECK(condition_number(orth, {true, true}) == doctest::Approx(1.0));
}

TEST_CASE("loss spec dimensions and names") {
    DesignMatrix d;
    d.x = RowMatrix::Ones(3, 3);
    d.y = Eigen::VectorXd::Zero(3);
    d.column_names = {"(intercept)", "a", "b"};
    d.num_classes = 3;
    const auto loss = LossSpec::for_design(d, {true, false, true});
    CHECK(loss.kind == LossKind::multinomial_nll);
    CHECK(loss.dim() == 4);
    const auto names = loss.coordinate_names(d.column_names);
    CHECK(names.size() == 4);
    CHECK(names[0] == "class1:(intercept)");
    CHECK(names[3] == "class2:b");
    CHECK_THROWS_AS(LossSpec::for_design(d, {false, true, true}), ValidationError);
}

TEST_CASE("fits are invariant to row order") {
    RngStream rng(7, 0);
    const RowMatrix x = random_design(60, 3, rng);
    Eigen::VectorXd y(60), labels(60);
    for (int i = 0; i < 60; ++i) {
        y(i) = x(i, 1) - x(i, 2) + rng.normal();
        labels(i) = static_cast<double>(rng.index(3));
    }
    std::vector<Eigen::Index> perm(60);
    for (int i = 0; i < 60; ++i) perm[i] = i;
    for (int i = 59; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    const RowMatrix xp = x(perm, Eigen::all);
    const std::vector<bool> active(4, true);
    CHECK((fit_linear(x, y, active).theta - fit_linear(xp, y(perm), active).theta).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::VectorXd lp = labels(perm);
    CHECK((fit_logistic(x, labels, 3, active).theta - fit_logistic(xp, lp, 3, active).theta).cwiseAbs().maxCoeff() <
          1e-10);
}

TEST_CASE("two-class multinomial equals binary logistic regression") {
    RngStream rng(8, 0);
    const RowMatrix x = random_design(80, 2, rng);
    Eigen::VectorXd labels(80);
    for (int i = 0; i < 80; ++i) labels(i) = rng.uniform() < 1.0 / (1.0 + std::exp(-x(i, 1))) ? 1.0 : 0.0;
    // textbook IRLS with sigmoid link
    Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
    for (int it = 0; it < 50; ++it) {
        const Eigen::ArrayXd p = 1.0 / (1.0 + (-(x * b).array()).exp());
        const Eigen::VectorXd grad = x.transpose() * (p.matrix() - labels) + 1e-8 * b;
        Eigen::MatrixXd h = x.transpose() * (p * (1 - p)).matrix().asDiagonal() * x;
        h.diagonal().array() += 1e-8;
        b -= h.ldlt().solve(grad);
    }
    const auto fit = fit_logistic(x, labels, 2, {true, true, true});
    CHECK((fit.theta - b).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pruning is idempotent") {
    RngStream rng(9, 0);
    RowMatrix x = random_design(40, 4, rng);
    x.col(4) = x.col(1) - x.col(2);
    const auto once = prune_collinear(x);
    RowMatrix kept(x.rows(), 0);
    std::vector<Eigen::Index> idx;
    for (std::size_t j = 0; j < once.size(); ++j) {
        if (once[j]) idx.push_back(static_cast<Eigen::Index>(j));
    }
    kept = x(Eigen::all, idx);
    const auto twice = prune_collinear(kept);
    CHECK(std::count(twice.begin(), twice.end(), true) == static_cast<long>(twice.size()));
    CHECK(std::count(once.begin(), once.end(), false) == 1);
}

TEST_CASE("scaling the response scales the slope coefficients") {
    RngStream rng(10, 0);
    RowMatrix x = random_design(50, 3, rng);
    for (int j = 1; j <= 3; ++j) {
        const double m = x.col(j).mean();
        x.col(j).array() -= m;
        x.col(j) /= std::sqrt(x.col(j).squaredNorm() / 50.0);
    }
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) y(i) = 2.0 * x(i, 2) + rng.normal();
    const std::vector<bool> active(4, true);
    const auto a = fit_linear(x, y, active).theta;
    const auto b = fit_linear(x, 3.5 * y, active).theta;
    CHECK((b.tail(3) - 3.5 * a.tail(3)).cwiseAbs().maxCoeff() < 1e-10);
}
