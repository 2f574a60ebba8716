#include "mgp/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mgp/error.hpp"

namespace mgp {

namespace {

std::vector<Eigen::Index> active_indices(const std::vector<bool>& active) {
    std::vector<Eigen::Index> idx;
    for (std::size_t j = 0; j < active.size(); ++j) {
        if (active[j]) idx.push_back(static_cast<Eigen::Index>(j));
    }
    return idx;
}

Eigen::MatrixXd masked(const RowMatrix& x, const std::vector<bool>& active) {
    if (active.size() != static_cast<std::size_t>(x.cols())) {
        throw ValidationError("column mask has " + std::to_string(active.size()) + " entries for " +
                              std::to_string(x.cols()) + " design columns");
    }
    return x(Eigen::all, active_indices(active));
}

Eigen::VectorXd weight_vector(std::span<const double> weights, Eigen::Index n) {
    if (weights.empty()) return Eigen::VectorXd::Ones(n);
    if (static_cast<Eigen::Index>(weights.size()) != n) throw ValidationError("weight count does not match rows");
    return Eigen::Map<const Eigen::VectorXd>(weights.data(), n);
}

// Per-row softmax over (0, eta_1..eta_{K-1}); returns log-sum-exp per row and
// fills probs for classes 1..K-1.
Eigen::VectorXd softmax_rows(const Eigen::MatrixXd& eta, Eigen::MatrixXd& probs) {
    const Eigen::Index n = eta.rows();
    Eigen::VectorXd lse(n);
    probs.resize(n, eta.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = std::max(0.0, eta.row(i).maxCoeff());
        double total = std::exp(-m);
        for (Eigen::Index k = 0; k < eta.cols(); ++k) {
            probs(i, k) = std::exp(eta(i, k) - m);
            total += probs(i, k);
        }
        probs.row(i) /= total;
        lse(i) = m + std::log(total);
    }
    return lse;
}

struct LogisticProblem {
    const Eigen::MatrixXd& xa;
    const Eigen::VectorXd& labels;
    const Eigen::VectorXd& w;
    Eigen::Index classes;  // K - 1 free classes
    double damping;

    Eigen::Index dim() const { return xa.cols() * classes; }

    Eigen::Map<const Eigen::MatrixXd> coef(const Eigen::VectorXd& theta) const {
        return {theta.data(), xa.cols(), classes};
    }

    double value(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) const {
        const Eigen::MatrixXd eta = xa * coef(theta);
        Eigen::MatrixXd probs;
        const Eigen::VectorXd lse = softmax_rows(eta, probs);
        double f = 0.0;
        Eigen::MatrixXd resid = probs;
        for (Eigen::Index i = 0; i < xa.rows(); ++i) {
            const auto y = static_cast<Eigen::Index>(labels(i));
            f += w(i) * (lse(i) - (y > 0 ? eta(i, y - 1) : 0.0));
            if (y > 0) resid(i, y - 1) -= 1.0;
        }
        f += 0.5 * damping * theta.squaredNorm();
        if (grad) {
            Eigen::MatrixXd g = xa.transpose() * (resid.array().colwise() * w.array()).matrix();
            *grad = Eigen::Map<Eigen::VectorXd>(g.data(), g.size()) + damping * theta;
        }
        if (hess) {
            const Eigen::Index q = xa.cols();
            hess->setZero(dim(), dim());
            for (Eigen::Index k = 0; k < classes; ++k) {
                for (Eigen::Index l = k; l < classes; ++l) {
                    Eigen::VectorXd s;
                    if (k == l) {
                        s = probs.col(k).array() * (1.0 - probs.col(k).array()) * w.array();
                    } else {
                        s = -probs.col(k).array() * probs.col(l).array() * w.array();
                    }
                    const Eigen::MatrixXd block = xa.transpose() * s.asDiagonal() * xa;
                    hess->block(k * q, l * q, q, q) = block;
                    if (l != k) hess->block(l * q, k * q, q, q) = block.transpose();
                }
            }
            hess->diagonal().array() += damping;
        }
        return f;
    }
};

}  // namespace

LossSpec LossSpec::for_design(const DesignMatrix& design, std::vector<bool> active, double damping) {
    LossSpec spec;
    spec.kind = design.categorical() ? LossKind::multinomial_nll : LossKind::squared_error;
    spec.num_classes = design.num_classes;
    spec.active = active.empty() ? std::vector<bool>(design.cols(), true) : std::move(active);
    spec.damping = damping;
    spec.validate(design);
    return spec;
}

std::size_t LossSpec::active_columns() const noexcept {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

std::size_t LossSpec::dim() const noexcept {
    return kind == LossKind::squared_error ? active_columns() : active_columns() * (num_classes - 1);
}

std::vector<std::string> LossSpec::coordinate_names(const std::vector<std::string>& column_names) const {
    std::vector<std::string> cols;
    for (std::size_t j = 0; j < active.size(); ++j) {
        if (active[j]) cols.push_back(j < column_names.size() ? column_names[j] : "x" + std::to_string(j));
    }
    if (kind == LossKind::squared_error || num_classes == 2) return cols;
    std::vector<std::string> names;
    for (std::size_t k = 1; k < num_classes; ++k) {
        for (const auto& c : cols) names.push_back("class" + std::to_string(k) + ":" + c);
    }
    return names;
}

void LossSpec::validate(const DesignMatrix& design) const {
    if (active.size() != design.cols()) throw ValidationError("loss mask does not match design width");
    if (active.empty() || !active[0]) throw ValidationError("loss mask must retain the intercept");
    if (kind == LossKind::squared_error && design.categorical()) {
        throw ValidationError("squared-error loss requires a continuous response");
    }
    if (kind == LossKind::multinomial_nll) {
        if (!design.categorical()) throw ValidationError("multinomial NLL requires a categorical response");
        if (num_classes != design.num_classes || num_classes < 2) {
            throw ValidationError("loss class count does not match the response");
        }
    }
    if (damping < 0.0) throw ValidationError("damping must be non-negative");
}

double condition_number(const RowMatrix& x, const std::vector<bool>& active) {
    const Eigen::MatrixXd xa = masked(x, active);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(xa);
    const auto& s = svd.singularValues();
    if (s.size() == 0) return 1.0;
    const double smallest = s(s.size() - 1);
    if (!(smallest > 0.0)) return std::numeric_limits<double>::infinity();
    return s(0) / smallest;
}

std::vector<bool> prune_collinear(const RowMatrix& x, double condition_threshold) {
    if (x.cols() < 2) throw ValidationError("collinearity pruning needs at least two columns");
    std::vector<bool> active(static_cast<std::size_t>(x.cols()), true);
    while (condition_number(x, active) > condition_threshold) {
        std::vector<Eigen::Index> candidates;
        for (std::size_t j = 1; j < active.size(); ++j) {
            if (active[j]) candidates.push_back(static_cast<Eigen::Index>(j));
        }
        if (candidates.empty()) throw NumericalError("collinearity pruning removed every non-intercept column");

        Eigen::MatrixXd cols = x(Eigen::all, candidates);
        cols.rowwise() -= cols.colwise().mean();
        const Eigen::MatrixXd cov = cols.transpose() * cols / static_cast<double>(x.rows());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        // Eigenvalues ascend; column 0 is the least important component.
        Eigen::Index worst = 0;
        eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
        active[static_cast<std::size_t>(candidates[static_cast<std::size_t>(worst)])] = false;
        if (candidates.size() == 1) throw NumericalError("collinearity pruning removed every non-intercept column");
    }
    return active;
}

FitResult fit_linear(const RowMatrix& x, const Eigen::VectorXd& y, const std::vector<bool>& active,
                     std::span<const double> weights) {
    const Eigen::MatrixXd xa = masked(x, active);
    if (y.size() != xa.rows()) throw ValidationError("response length does not match design rows");
    const Eigen::VectorXd w = weight_vector(weights, xa.rows());
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::MatrixXd xw = sw.asDiagonal() * xa;
    const Eigen::VectorXd yw = sw.cwiseProduct(y);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
    if (qr.rank() < xa.cols()) {
        throw NumericalError("design is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(xa.cols()) + ")");
    }
    FitResult out;
    out.theta = qr.solve(yw);
    const double tol = 1e-8 * (1.0 + yw.norm());
    for (out.iterations = 1;; ++out.iterations) {
        const Eigen::VectorXd resid = xw * out.theta - yw;
        const Eigen::VectorXd grad = xw.transpose() * resid;
        out.gradient_norm = grad.norm();
        if (out.gradient_norm <= tol || out.iterations >= 3) break;
        out.theta -= qr.solve(resid);  // one step of iterative refinement
    }
    out.converged = out.gradient_norm <= tol;
    return out;
}

double logistic_objective(const RowMatrix& x, const Eigen::VectorXd& labels, std::size_t num_classes,
                          const std::vector<bool>& active, const Eigen::VectorXd& theta, double damping,
                          Eigen::VectorXd* gradient, std::span<const double> weights) {
    const Eigen::MatrixXd xa = masked(x, active);
    const Eigen::VectorXd w = weight_vector(weights, xa.rows());
    const LogisticProblem problem{xa, labels, w, static_cast<Eigen::Index>(num_classes) - 1, damping};
    if (theta.size() != problem.dim()) throw ValidationError("theta has the wrong dimension");
    return problem.value(theta, gradient, nullptr);
}

FitResult fit_logistic(const RowMatrix& x, const Eigen::VectorXd& labels, std::size_t num_classes,
                       const std::vector<bool>& active, const LogisticOptions& options,
                       std::span<const double> weights) {
    if (num_classes < 2) throw ValidationError("logistic regression needs at least two classes");
    const Eigen::MatrixXd xa = masked(x, active);
    if (labels.size() != xa.rows()) throw ValidationError("label count does not match design rows");
    const Eigen::VectorXd w = weight_vector(weights, xa.rows());

    std::vector<double> class_weight(num_classes, 0.0);
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        const double l = labels(i);
        if (l < 0 || l >= static_cast<double>(num_classes) || l != std::floor(l)) {
            throw ValidationError("label outside 0..K-1");
        }
        class_weight[static_cast<std::size_t>(l)] += w(i);
    }
    if (options.damping == 0.0) {
        for (std::size_t k = 0; k < num_classes; ++k) {
            if (class_weight[k] <= 0.0) {
                throw NumericalError("class " + std::to_string(k) + " is absent and no damping guards the fit");
            }
        }
    }

    const LogisticProblem problem{xa, labels, w, static_cast<Eigen::Index>(num_classes) - 1, options.damping};
    FitResult out;
    out.theta = Eigen::VectorXd::Zero(problem.dim());
    if (options.warm_start && options.warm_start->size() == problem.dim()) out.theta = *options.warm_start;

    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    double f = problem.value(out.theta, &grad, &hess);
    out.gradient_norm = grad.norm();
    for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
        if (out.gradient_norm <= options.tolerance) break;

        Eigen::VectorXd step;
        Eigen::LLT<Eigen::MatrixXd> llt(hess);
        if (llt.info() == Eigen::Success) step = llt.solve(-grad);
        if (step.size() == 0 || !step.allFinite() || grad.dot(step) >= 0.0) step = -grad;

        const double slope = grad.dot(step);
        double t = 1.0;
        Eigen::VectorXd candidate;
        double f_new = 0.0;
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
            candidate = out.theta + t * step;
            f_new = problem.value(candidate, nullptr, nullptr);
            if (f_new <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            // At the optimum the predicted decrease is below rounding of f; take the full step.
            if (halvings == 0 && std::abs(slope) <= 1e-12 * (1.0 + std::abs(f))) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        out.theta = candidate;
        f = problem.value(out.theta, &grad, &hess);
        out.gradient_norm = grad.norm();
    }
    out.converged = out.gradient_norm <= options.tolerance;
    return out;
}

FitResult fit(const LossSpec& loss, const RowMatrix& x, const Eigen::VectorXd& y, std::span<const double> weights,
              const Eigen::VectorXd* warm_start) {
    if (loss.kind == LossKind::squared_error) return fit_linear(x, y, loss.active, weights);
    LogisticOptions options;
    options.damping = loss.damping;
    options.warm_start = warm_start;
    return fit_logistic(x, y, loss.num_classes, loss.active, options, weights);
}

Eigen::VectorXd softmax_probabilities(std::span<const double> design_row, const std::vector<bool>& active,
                                      std::size_t num_classes, const Eigen::VectorXd& theta) {
    const auto q = static_cast<Eigen::Index>(std::count(active.begin(), active.end(), true));
    Eigen::VectorXd xa(q);
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < active.size(); ++j) {
        if (active[j]) xa(c++) = design_row[j];
    }
    const Eigen::Map<const Eigen::MatrixXd> coef(theta.data(), q, static_cast<Eigen::Index>(num_classes) - 1);
    const Eigen::VectorXd eta = coef.transpose() * xa;
    const double m = std::max(0.0, eta.size() ? eta.maxCoeff() : 0.0);
    Eigen::VectorXd probs(static_cast<Eigen::Index>(num_classes));
    probs(0) = std::exp(-m);
    for (Eigen::Index k = 0; k < eta.size(); ++k) probs(k + 1) = std::exp(eta(k) - m);
    return probs / probs.sum();
}

}  // namespace mgp
