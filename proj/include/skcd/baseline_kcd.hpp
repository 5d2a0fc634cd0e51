#pragma once

#include <cstdint>
#include <vector>

#include "skcd/dataset.hpp"
#include "skcd/kernels.hpp"

namespace skcd {

struct KcdConfig {
    int permutations = 150; // M
    double alpha = 0.05;
    double lambda = 1e-3;
    KernelSpec kernel_x = KernelSpec::median(); // resolved per treatment arm
    KernelSpec kernel_y = KernelSpec::median(); // resolved on all outcomes
    std::uint64_t seed = 0;
    int threads = 1;
};

struct KcdResult {
    double statistic = 0.0;
    std::vector<double> permutation_values;
    double quantile = 0.0;
    bool reject = false;
    double exceedance = 0.0;
    double alpha = 0.05;
    int permutations = 0;
    std::uint64_t seed = 0;
    int n = 0;
};

/// Permutation-test baseline statistic: with full-sample (no cross-fitting)
/// ridge weights M_a = K_{all,a} (K_a + lambda I)^{-1} per arm and the
/// outcome Gram L on a common bandwidth,
///   (1/n) trace(M_1 L_11 M_1^T - 2 M_1 L_10 M_0^T + M_0 L_00 M_0^T),
/// i.e. the average squared RKHS distance between the two fitted
/// conditional mean embeddings. Covariate bandwidths are arm-specific when
/// the spec carries the median-heuristic marker.
double kcd_statistic(const Matrix& covariates, const std::vector<int>& treatment,
                     const Matrix& outcome_gram, const KernelSpec& kernel_x, double lambda);

/// Convenience overload resolving the outcome kernel on the full sample.
double kcd_statistic(const Dataset& data, const KernelSpec& kernel_x, const KernelSpec& kernel_y,
                     double lambda);

/// Uniformly shuffles the treatment vector M times, refitting both outcome
/// models per permutation; rejects when the observed statistic exceeds the
/// ceil((1-alpha) M)-th order statistic of the permuted values.
KcdResult kcd_permutation_test(const Dataset& data, const KcdConfig& config);

} // namespace skcd
