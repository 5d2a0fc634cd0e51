#include "skcd/baseline_kcd.hpp"

#include <Eigen/Cholesky>

#include "skcd/errors.hpp"
#include "skcd/inference.hpp"
#include "skcd/parallel.hpp"
#include "skcd/rng.hpp"

namespace skcd {

namespace {

std::vector<int> arm_indices(const std::vector<int>& treatment, int arm) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < treatment.size(); ++i)
        if (treatment[i] == arm) idx.push_back(static_cast<int>(i));
    return idx;
}

Matrix select_rows(const Matrix& a, const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
        out.row(static_cast<Eigen::Index>(r)) = a.row(rows[r]);
    return out;
}

Matrix select_block(const Matrix& a, const std::vector<int>& rows,
                    const std::vector<int>& cols) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                a(rows[r], cols[c]);
    return out;
}

// Full-sample ridge prediction weights for one arm.
Matrix arm_weights(const Matrix& covariates, const std::vector<int>& arm_idx,
                   const KernelSpec& kernel_x, double lambda) {
    const Matrix arm_points = select_rows(covariates, arm_idx);
    const KernelSpec spec = resolve(kernel_x, arm_points);
    Matrix system = gram(arm_points, spec);
    system.diagonal().array() += lambda;
    const Matrix cross = cross_gram(covariates, arm_points, spec); // n x n_a
    Eigen::LLT<Matrix> llt(system);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-10 * system.trace() / static_cast<double>(system.rows());
        system.diagonal().array() += jitter;
        llt.compute(system);
        if (llt.info() != Eigen::Success)
            throw NumericsError("singular ridge system in baseline statistic");
    }
    return llt.solve(cross.transpose()).transpose(); // n x n_a
}

} // namespace

double kcd_statistic(const Matrix& covariates, const std::vector<int>& treatment,
                     const Matrix& outcome_gram, const KernelSpec& kernel_x, double lambda) {
    const auto n = covariates.rows();
    const std::vector<int> idx1 = arm_indices(treatment, 1);
    const std::vector<int> idx0 = arm_indices(treatment, 0);
    if (idx0.empty() || idx1.empty()) throw DomainError("both treatment arms must be nonempty");

    const Matrix m1 = arm_weights(covariates, idx1, kernel_x, lambda);
    const Matrix m0 = arm_weights(covariates, idx0, kernel_x, lambda);

    const Matrix l11 = select_block(outcome_gram, idx1, idx1);
    const Matrix l10 = select_block(outcome_gram, idx1, idx0);
    const Matrix l00 = select_block(outcome_gram, idx0, idx0);

    // trace(A B A^T) evaluated as sum((A B) o A).
    const double t11 = (m1 * l11).cwiseProduct(m1).sum();
    const double t10 = (m1 * l10).cwiseProduct(m0).sum();
    const double t00 = (m0 * l00).cwiseProduct(m0).sum();
    return (t11 - 2.0 * t10 + t00) / static_cast<double>(n);
}

double kcd_statistic(const Dataset& data, const KernelSpec& kernel_x, const KernelSpec& kernel_y,
                     double lambda) {
    const KernelSpec spec_y = resolve(kernel_y, data.outcomes);
    const Matrix outcome_gram = gram(data.outcomes, spec_y);
    return kcd_statistic(data.covariates, data.treatment, outcome_gram, kernel_x, lambda);
}

KcdResult kcd_permutation_test(const Dataset& data, const KcdConfig& config) {
    data.validate();
    if (config.permutations < 1) throw DomainError("permutation count must be positive");

    const KernelSpec spec_y = resolve(config.kernel_y, data.outcomes);
    const Matrix outcome_gram = gram(data.outcomes, spec_y);

    KcdResult result;
    result.alpha = config.alpha;
    result.permutations = config.permutations;
    result.seed = config.seed;
    result.n = data.n();
    result.statistic = kcd_statistic(data.covariates, data.treatment, outcome_gram,
                                     config.kernel_x, config.lambda);

    result.permutation_values.assign(static_cast<std::size_t>(config.permutations), 0.0);
    parallel_for(config.permutations, config.threads, [&](int rep) {
        Rng rng(derive_seed(config.seed, kPermutationStream, static_cast<std::uint64_t>(rep)));
        std::vector<int> shuffled = data.treatment;
        rng.shuffle(shuffled);
        result.permutation_values[static_cast<std::size_t>(rep)] = kcd_statistic(
            data.covariates, shuffled, outcome_gram, config.kernel_x, config.lambda);
    });

    result.quantile = quantile(result.permutation_values, config.alpha);
    result.reject = result.statistic > result.quantile;
    int exceed = 0;
    for (double v : result.permutation_values)
        if (v >= result.statistic) ++exceed;
    result.exceedance = (exceed + 1.0) / (config.permutations + 1.0);
    return result;
}

} // namespace skcd
