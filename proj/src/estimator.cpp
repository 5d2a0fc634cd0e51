#include "skcd/estimator.hpp"

#include "skcd/errors.hpp"

namespace skcd {

Matrix build_one_step_coefficients(const std::vector<int>& treatment,
                                   const FoldAssignment& folds, const Vector& propensity,
                                   const OutcomeWeights& weights) {
    const int n = folds.n();
    if (static_cast<int>(treatment.size()) != n || propensity.size() != n)
        throw DomainError("inconsistent inputs to build_one_step_coefficients");

    Matrix coef = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int fold = folds.fold_of[static_cast<std::size_t>(i)];
        const double scale = 1.0 / (2.0 * folds.size(fold));
        const double a = treatment[static_cast<std::size_t>(i)];
        const double w = propensity(i);
        coef(i, i) = scale * (a / w - (1.0 - a) / (1.0 - w));

        const double gain1 = scale * (1.0 - a / w);
        const double gain0 = scale * ((1.0 - a) / (1.0 - w) - 1.0);
        const int row = folds.position_in_fold(i);
        for (int arm : {0, 1}) {
            const Matrix& block = weights.weights(fold, arm);
            if (block.size() == 0) continue;
            const auto& cols = weights.columns(fold, arm);
            const double gain = arm == 1 ? gain1 : gain0;
            for (std::size_t c = 0; c < cols.size(); ++c) {
                const int j = cols[c];
                if (j == i) continue;
                coef(i, j) += gain * block(row, static_cast<Eigen::Index>(c));
            }
        }
    }
    return coef;
}

Matrix build_plug_in_coefficients(const FoldAssignment& folds, const OutcomeWeights& weights) {
    const int n = folds.n();
    Matrix coef = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int fold = folds.fold_of[static_cast<std::size_t>(i)];
        const double scale = 1.0 / (2.0 * folds.size(fold));
        const int row = folds.position_in_fold(i);
        for (int arm : {0, 1}) {
            const Matrix& block = weights.weights(fold, arm);
            if (block.size() == 0) continue;
            const auto& cols = weights.columns(fold, arm);
            const double sign = arm == 1 ? 1.0 : -1.0;
            for (std::size_t c = 0; c < cols.size(); ++c) {
                const int j = cols[c];
                if (j == i) continue;
                coef(i, j) += sign * scale * block(row, static_cast<Eigen::Index>(c));
            }
        }
    }
    return coef;
}

double witness_value(const Matrix& coef, const Vector& k_x, const Vector& l_y) {
    return k_x.dot(coef * l_y);
}

Vector witness_values(const Matrix& coef, const Vector& k_x, const Matrix& l_grid) {
    return (k_x.transpose() * coef * l_grid).transpose();
}

double squared_rkhs_norm(const Matrix& coef, const Matrix& gram_x, const Matrix& gram_y) {
    return coef.cwiseProduct(gram_x * coef * gram_y).sum();
}

} // namespace skcd
