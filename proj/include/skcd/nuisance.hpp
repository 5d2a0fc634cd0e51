#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "skcd/dataset.hpp"

namespace skcd {

enum class PropensityMethod { kKnown, kLogistic, kConstant };

struct PropensityOptions {
    PropensityMethod method = PropensityMethod::kLogistic;
    Vector known;              // length n, used when method == kKnown
    double l2_penalty = 1e-4;  // on non-intercept weights (logistic)
    double clip_lo = 1e-6;
    double clip_hi = 1.0 - 1e-6;
};

/// Cross-fitted propensities: w[i] is produced by a model fitted only on
/// the fold complementary to the one containing i, clipped into
/// [clip_lo, clip_hi].
struct PropensityFit {
    Vector w;
    PropensityMethod method = PropensityMethod::kLogistic;
    double clip_lo = 1e-6;
    double clip_hi = 1.0 - 1e-6;
};

PropensityFit fit_propensity(const Dataset& data, const FoldAssignment& folds,
                             const PropensityOptions& options, std::uint64_t seed);

/// L2-penalized logistic regression with intercept, fitted by damped Newton
/// iterations (max 100; stop when the gradient sup-norm drops below 1e-8).
/// The deviance trace is exposed so the non-increase of the penalized
/// deviance across accepted iterations can be checked.
struct LogisticFit {
    Vector coef; // [intercept, weights...]
    std::vector<double> deviance_trace;
    int iterations = 0;

    Vector predict(const Matrix& x) const;
};

LogisticFit fit_logistic_l2(const Matrix& x, const std::vector<int>& labels, double penalty);

/// Kernel ridge regression prediction weights per ordered fold pair and
/// treatment arm. weights(s, a) has one row per query index in fold s (in
/// fold order) and one column per training point j in the complementary
/// fold with arm a; columns(s, a) maps columns to those global indices.
/// Entries outside the stored columns are implicitly zero.
struct OutcomeWeights {
    std::array<std::array<Matrix, 2>, 2> weight_blocks;       // [s-1][a]
    std::array<std::array<std::vector<int>, 2>, 2> column_map; // [s-1][a]
    double lambda = 1e-3;

    const Matrix& weights(int fold, int arm) const {
        return weight_blocks[static_cast<std::size_t>(fold - 1)][static_cast<std::size_t>(arm)];
    }
    const std::vector<int>& columns(int fold, int arm) const {
        return column_map[static_cast<std::size_t>(fold - 1)][static_cast<std::size_t>(arm)];
    }
};

/// Fits the four ridge systems: for each fold s and arm a, with training
/// set J = {j in the complementary fold : a_j = a},
///   weights = K[I_s, J] (K[J, J] + lambda I)^{-1},
/// computed through a symmetric positive-definite solve (never an explicit
/// inverse), with a one-shot trace-scaled jitter retry on factorization
/// failure.
OutcomeWeights fit_outcome_weights(const Dataset& data, const FoldAssignment& folds,
                                   const Matrix& covariate_gram, double lambda);

} // namespace skcd
