#include "skcd/nuisance.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "skcd/errors.hpp"

namespace skcd {

namespace {

// log(1 + exp(m)) without overflow.
double log1pexp(double m) {
    return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

double penalized_deviance(const Matrix& design, const std::vector<int>& labels,
                          const Vector& coef, double penalty) {
    Vector margin = design * coef;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < margin.size(); ++i)
        loss += log1pexp(margin(i)) - labels[static_cast<std::size_t>(i)] * margin(i);
    loss += 0.5 * penalty * coef.tail(coef.size() - 1).squaredNorm();
    return loss;
}

} // namespace

Vector LogisticFit::predict(const Matrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double margin = coef(0) + x.row(i).dot(coef.tail(coef.size() - 1));
        out(i) = 1.0 / (1.0 + std::exp(-margin));
    }
    return out;
}

LogisticFit fit_logistic_l2(const Matrix& x, const std::vector<int>& labels, double penalty) {
    const auto m = x.rows();
    const auto d = x.cols() + 1;
    Matrix design(m, d);
    design.col(0).setOnes();
    design.rightCols(x.cols()) = x;

    LogisticFit fit;
    fit.coef = Vector::Zero(d);
    fit.deviance_trace.push_back(penalized_deviance(design, labels, fit.coef, penalty));

    Vector ridge = Vector::Constant(d, penalty);
    ridge(0) = 0.0; // intercept unpenalized

    for (int iter = 0; iter < 100; ++iter) {
        fit.iterations = iter + 1;
        Vector margin = design * fit.coef;
        Vector prob(m), curvature(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            prob(i) = 1.0 / (1.0 + std::exp(-margin(i)));
            curvature(i) = prob(i) * (1.0 - prob(i));
        }
        Vector residual = prob;
        for (Eigen::Index i = 0; i < m; ++i)
            residual(i) -= labels[static_cast<std::size_t>(i)];
        Vector grad = design.transpose() * residual + ridge.asDiagonal() * fit.coef;
        if (grad.lpNorm<Eigen::Infinity>() < 1e-8) break;

        Matrix hessian = design.transpose() * curvature.asDiagonal() * design;
        hessian += Matrix(ridge.asDiagonal());
        // A vanishing curvature (separable data) still leaves the penalty
        // block positive; stabilize the intercept direction.
        hessian(0, 0) += 1e-12;
        Vector step = hessian.ldlt().solve(-grad);

        const double current = fit.deviance_trace.back();
        double t = 1.0;
        bool accepted = false;
        for (int back = 0; back < 60; ++back, t *= 0.5) {
            const double candidate =
                penalized_deviance(design, labels, fit.coef + t * step, penalty);
            if (candidate <= current + 1e-14 * (1.0 + std::abs(current))) {
                fit.coef += t * step;
                fit.deviance_trace.push_back(candidate);
                accepted = true;
                break;
            }
        }
        if (!accepted)
            throw NumericsError("logistic regression diverged: deviance increases after "
                                "full backtracking");
    }
    return fit;
}

PropensityFit fit_propensity(const Dataset& data, const FoldAssignment& folds,
                             const PropensityOptions& options, std::uint64_t /*seed*/) {
    const int n = data.n();
    if (folds.n() != n) throw DomainError("fold assignment does not match dataset");

    PropensityFit fit;
    fit.method = options.method;
    fit.clip_lo = options.clip_lo;
    fit.clip_hi = options.clip_hi;
    fit.w.resize(n);

    switch (options.method) {
        case PropensityMethod::kKnown: {
            if (options.known.size() != n)
                throw DomainError("known propensities must have length n");
            for (int i = 0; i < n; ++i) {
                const double p = options.known(i);
                if (!(p >= 0.0 && p <= 1.0))
                    throw DomainError("known propensity outside [0,1]");
                fit.w(i) = p;
            }
            break;
        }
        case PropensityMethod::kConstant: {
            for (int fold : {1, 2}) {
                const int train = 3 - fold;
                int treated = 0;
                for (int j : folds.indices(train))
                    treated += data.treatment[static_cast<std::size_t>(j)];
                const double rate =
                    static_cast<double>(treated) / static_cast<double>(folds.size(train));
                for (int i : folds.indices(fold)) fit.w(i) = rate;
            }
            break;
        }
        case PropensityMethod::kLogistic: {
            for (int fold : {1, 2}) {
                const int train = 3 - fold;
                const auto& train_idx = folds.indices(train);
                Matrix x_train(train_idx.size(), data.dim_x());
                std::vector<int> y_train(train_idx.size());
                for (std::size_t r = 0; r < train_idx.size(); ++r) {
                    x_train.row(static_cast<Eigen::Index>(r)) =
                        data.covariates.row(train_idx[r]);
                    y_train[r] = data.treatment[static_cast<std::size_t>(train_idx[r])];
                }
                LogisticFit model = fit_logistic_l2(x_train, y_train, options.l2_penalty);
                for (int i : folds.indices(fold)) {
                    const double margin =
                        model.coef(0) +
                        data.covariates.row(i).dot(model.coef.tail(model.coef.size() - 1));
                    fit.w(i) = 1.0 / (1.0 + std::exp(-margin));
                }
            }
            break;
        }
    }
    fit.w = fit.w.cwiseMax(options.clip_lo).cwiseMin(options.clip_hi);
    return fit;
}

OutcomeWeights fit_outcome_weights(const Dataset& data, const FoldAssignment& folds,
                                   const Matrix& covariate_gram, double lambda) {
    const int n = data.n();
    if (!(lambda > 0.0)) throw DomainError("ridge parameter must be positive");
    if (covariate_gram.rows() != n || covariate_gram.cols() != n)
        throw DomainError("gram matrix does not match dataset size");

    OutcomeWeights result;
    result.lambda = lambda;

    for (int fold : {1, 2}) {
        const int train = 3 - fold;
        const auto& query_idx = folds.indices(fold);
        for (int arm : {0, 1}) {
            std::vector<int> train_idx;
            for (int j : folds.indices(train))
                if (data.treatment[static_cast<std::size_t>(j)] == arm) train_idx.push_back(j);
            if (train_idx.empty())
                throw DomainError("empty training set for arm " + std::to_string(arm) +
                                  " in fold " + std::to_string(train));

            const auto m = static_cast<Eigen::Index>(train_idx.size());
            Matrix system(m, m);
            for (Eigen::Index p = 0; p < m; ++p)
                for (Eigen::Index q = 0; q < m; ++q)
                    system(p, q) = covariate_gram(train_idx[static_cast<std::size_t>(p)],
                                                  train_idx[static_cast<std::size_t>(q)]);
            system.diagonal().array() += lambda;

            Matrix cross(m, static_cast<Eigen::Index>(query_idx.size()));
            for (Eigen::Index p = 0; p < m; ++p)
                for (std::size_t q = 0; q < query_idx.size(); ++q)
                    cross(p, static_cast<Eigen::Index>(q)) =
                        covariate_gram(train_idx[static_cast<std::size_t>(p)], query_idx[q]);

            Eigen::LLT<Matrix> llt(system);
            if (llt.info() != Eigen::Success) {
                const double jitter = 1e-10 * system.trace() / static_cast<double>(m);
                system.diagonal().array() += jitter;
                llt.compute(system);
                if (llt.info() != Eigen::Success)
                    throw NumericsError("singular ridge system despite regularization");
            }
            // weights = K[I_s, J] (K[J,J] + lambda I)^{-1}, via solve + transpose.
            Matrix block = llt.solve(cross).transpose();

            result.weight_blocks[static_cast<std::size_t>(fold - 1)]
                                [static_cast<std::size_t>(arm)] = std::move(block);
            result.column_map[static_cast<std::size_t>(fold - 1)]
                             [static_cast<std::size_t>(arm)] = std::move(train_idx);
        }
    }
    return result;
}

} // namespace skcd
