#pragma once

#include <array>
#include <optional>

#include <Eigen/LU>

#include "skcd/dataset.hpp"

namespace skcd {

enum class StatKind { kMmd, kWald };

struct Statistic {
    StatKind kind = StatKind::kMmd;
    double value = 0.0;
    int n = 0;
    std::optional<double> epsilon; // present for the Wald kind
};

/// n <C, K C L>_F: sample size times the squared RKHS norm of the one-step
/// estimator. Tiny negative round-off (> -1e-8) is clamped to zero.
Statistic mmd_statistic(const Matrix& coef, const Matrix& gram_x, const Matrix& gram_y, int n);

/// Covariance-trace heuristic for the Wald regularizer:
///   eps = gamma t / (1 + gamma t), t = trace of the empirical covariance.
/// Negative t is clipped to 0 and the result floored at 1e-8.
double epsilon_heuristic(double trace_cov, double gamma);

/// How to pick the Wald regularizer: a fixed value in (0,1], or the trace
/// heuristic with trust parameter gamma.
struct EpsilonRule {
    bool is_fixed = false;
    double value = 1.0;
    double gamma = 1.0 / 3.0;

    static EpsilonRule fixed(double eps) { return {true, eps, 0.0}; }
    static EpsilonRule from_gamma(double gamma) { return {false, 0.0, gamma}; }
};

/// Row-masked scaled copy: rows belonging to the given fold are scaled by
/// `scale`, all other rows are zero.
Matrix fold_masked_scaled(const Matrix& a, const FoldAssignment& folds, int fold, double scale);

/// Amortized objects for the Wald-type statistic and its multiplier
/// bootstrap. Assembling the (2n+4)^2 covariance block costs O(n^3) once;
/// every bootstrap replicate afterwards is O(n^2).
///
/// With D^s / V^s / W^s the fold-masked scaled copies of C and E
/// (W^s = D^s - n_s V^s), the stored pieces are
///   mmd_form        M        = K o (C L C^T)
///   split_forms[s]  H_{S^s}  = K o (D^s (C L)^T)
///   plug_in_dots[s] h_{V^s}  = diag(C L V^s^T K)
///   centered_dots[s] h_{W^s} = diag(C L W^s^T K)
///   cov_block       U^T T, assembled block-wise from n x n products
///   solver          LU factorization of Z = eps I + (1 - eps) U^T T
/// plus the unit-multiplier projections T^T c, U^T G c and a fused n x n
/// quadratic form so that a replicate reduces to one mat-vec.
struct WaldPrecompute {
    int n = 0;
    double epsilon = 1.0;
    double trace_cov = 0.0;    // trace(U^T T), the empirical covariance trace
    double base_norm_sq = 0.0; // <C, K C L>_F

    Matrix mmd_form;
    std::array<Matrix, 2> split_forms;
    std::array<Vector, 2> plug_in_dots;
    std::array<Vector, 2> centered_dots;
    Matrix cov_block;
    Eigen::PartialPivLU<Matrix> solver;
    Vector t_proj_unit;  // T^T c at xi = 1
    Vector ug_proj_unit; // U^T G c at xi = 1
    Matrix replicate_form; // (1/eps) M - ((1-eps)/eps) A_T^T Z^{-1} A_U
};

WaldPrecompute build_wald_precompute(const Matrix& coef_one_step, const Matrix& coef_plug_in,
                                     const Matrix& gram_x, const Matrix& gram_y,
                                     const FoldAssignment& folds, const EpsilonRule& rule);

inline WaldPrecompute build_wald_precompute(const Matrix& coef_one_step,
                                            const Matrix& coef_plug_in, const Matrix& gram_x,
                                            const Matrix& gram_y, const FoldAssignment& folds,
                                            double epsilon) {
    return build_wald_precompute(coef_one_step, coef_plug_in, gram_x, gram_y, folds,
                                 EpsilonRule::fixed(epsilon));
}

/// Closed-form Wald statistic:
///   (n/eps) <C, K C L>_F
///     - (n(1-eps)/eps) c^T T (eps I + (1-eps) U^T T)^{-1} U^T G c,
/// using the stored projections and LU factors. At eps = 1 this equals the
/// MMD statistic exactly.
Statistic wald_statistic(const WaldPrecompute& pre, const Matrix& coef, const Matrix& gram_x,
                         const Matrix& gram_y, int n);

/// Dense reference computation that materializes the full n^2-dimensional
/// representation (guarded to n <= 40). Without epsilon it evaluates the
/// MMD form n c^T G c; with epsilon it evaluates
/// n c^T (eps I + (1-eps) T U^T)^{-1} G c.
double brute_force_statistic(const Matrix& coef_one_step, const Matrix& coef_plug_in,
                             const Matrix& gram_x, const Matrix& gram_y,
                             const FoldAssignment& folds, std::optional<double> epsilon);

// Dense builders shared by the brute-force oracle, tests and the CLI
// oracle-check command. Row-major vectorization convention throughout:
// vec(A)(i*n + j) = A(i, j).
namespace dense {

Vector vec_row_major(const Matrix& a);

/// Kronecker product G with G[(i*n+j), (i'*n+j')] = K(i,i') L(j,j').
Matrix kronecker(const Matrix& gram_x, const Matrix& gram_y);

struct Stacked {
    Matrix t; // n^2 x (2n+4): [G S^1, G S^2, G v^1, G v^2, G w^1, G w^2]
    Matrix u; // n^2 x (2n+4): [S^1, S^2, -d^1, -d^2, -v^1, -v^2]
};

Stacked stack_blocks(const Matrix& coef_one_step, const Matrix& coef_plug_in,
                     const Matrix& gram_x, const Matrix& gram_y, const FoldAssignment& folds);

} // namespace dense

} // namespace skcd
