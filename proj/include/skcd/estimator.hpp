#pragma once

#include "skcd/dataset.hpp"
#include "skcd/nuisance.hpp"

namespace skcd {

/// Coefficient matrices representing the estimators in the span of the
/// feature maps at the observed (x_i, y_j) pairs: the estimated witness is
/// psi(x, y) = k_x^T C l_y, where row i of C collects the terms specific to
/// observation i.
struct CoefficientMatrices {
    Matrix one_step; // C: inverse-propensity diagonal + augmentation terms
    Matrix plug_in;  // E: pure outcome-model coefficients, zero diagonal
};

/// One-step coefficient matrix. Diagonal entry i is
///   (a_i/w_i - (1-a_i)/(1-w_i)) / (2 n_{s(i)})
/// and off-diagonal entries carry the augmentation corrections
///   [(1 - a_i/w_i) beta1_j + ((1-a_i)/(1-w_i) - 1) beta0_j] / (2 n_{s(i)}),
/// where beta_a is the outcome-weights row for query i, supported on the
/// fold complementary to i.
Matrix build_one_step_coefficients(const std::vector<int>& treatment,
                                   const FoldAssignment& folds, const Vector& propensity,
                                   const OutcomeWeights& weights);

/// Plug-in coefficient matrix: (beta1_j - beta0_j) / (2 n_{s(i)}) off the
/// diagonal, zero on it.
Matrix build_plug_in_coefficients(const FoldAssignment& folds, const OutcomeWeights& weights);

/// Witness value k_x^T C l_y.
double witness_value(const Matrix& coef, const Vector& k_x, const Vector& l_y);

/// Witness evaluated against a grid: entry g is k_x^T C l_grid[:, g].
Vector witness_values(const Matrix& coef, const Vector& k_x, const Matrix& l_grid);

/// Squared RKHS norm of the represented element: <C, K C L>_F. Nonnegative
/// up to round-off.
double squared_rkhs_norm(const Matrix& coef, const Matrix& gram_x, const Matrix& gram_y);

} // namespace skcd
