#include "skcd/statistics.hpp"

#include <cmath>

#include "skcd/errors.hpp"
#include "skcd/estimator.hpp"

namespace skcd {

namespace {

double clamp_tiny_negative(double value) {
    return (value < 0.0 && value > -1e-8) ? 0.0 : value;
}

} // namespace

Statistic mmd_statistic(const Matrix& coef, const Matrix& gram_x, const Matrix& gram_y, int n) {
    Statistic stat;
    stat.kind = StatKind::kMmd;
    stat.n = n;
    stat.value = clamp_tiny_negative(n * squared_rkhs_norm(coef, gram_x, gram_y));
    return stat;
}

double epsilon_heuristic(double trace_cov, double gamma) {
    if (!(gamma > 0.0)) throw DomainError("epsilon heuristic requires gamma > 0");
    const double t = trace_cov > 0.0 ? trace_cov : 0.0;
    const double eps = gamma * t / (1.0 + gamma * t);
    return eps > 1e-8 ? eps : 1e-8;
}

Matrix fold_masked_scaled(const Matrix& a, const FoldAssignment& folds, int fold, double scale) {
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    for (int i : folds.indices(fold)) out.row(i) = scale * a.row(i);
    return out;
}

WaldPrecompute build_wald_precompute(const Matrix& coef_one_step, const Matrix& coef_plug_in,
                                     const Matrix& gram_x, const Matrix& gram_y,
                                     const FoldAssignment& folds, const EpsilonRule& rule) {
    const int n = static_cast<int>(coef_one_step.rows());
    if (coef_one_step.cols() != n || coef_plug_in.rows() != n || coef_plug_in.cols() != n ||
        gram_x.rows() != n || gram_y.rows() != n || folds.n() != n)
        throw DomainError("inconsistent inputs to build_wald_precompute");
    if (rule.is_fixed && !(rule.value > 0.0 && rule.value <= 1.0))
        throw DomainError("epsilon must lie in (0, 1]");

    const Matrix& C = coef_one_step;
    const Matrix& K = gram_x;
    const Matrix& L = gram_y;

    WaldPrecompute pre;
    pre.n = n;

    const Matrix CL = C * L;
    pre.mmd_form = K.cwiseProduct(CL * C.transpose());
    pre.base_norm_sq = C.cwiseProduct(K * CL).sum();

    const int m = 2 * n + 4;
    pre.cov_block.resize(m, m);

    {
        std::array<Matrix, 2> D, V, W;
        for (int s : {1, 2}) {
            const double ns = folds.size(s);
            D[s - 1] = fold_masked_scaled(C, folds, s, std::sqrt(2.0 * ns));
            V[s - 1] = fold_masked_scaled(coef_plug_in, folds, s, std::sqrt(2.0 / ns));
            W[s - 1] = D[s - 1] - ns * V[s - 1];
        }

        for (int s : {1, 2})
            pre.split_forms[s - 1] = K.cwiseProduct(D[s - 1] * CL.transpose());

        // h_F = diag(C L F^T K) computed as the row-wise dots of CL and K F.
        std::array<Matrix, 2> KVL, KWL;
        for (int s : {1, 2}) {
            Matrix KV = K * V[s - 1];
            pre.plug_in_dots[s - 1] = CL.cwiseProduct(KV).rowwise().sum();
            KVL[s - 1] = KV * L;
            Matrix KW = K * W[s - 1];
            pre.centered_dots[s - 1] = CL.cwiseProduct(KW).rowwise().sum();
            KWL[s - 1] = KW * L;
        }

        std::array<Matrix, 2> DL, KDL;
        for (int s : {1, 2}) {
            DL[s - 1] = D[s - 1] * L;
            KDL[s - 1] = K * DL[s - 1];
        }

        // U^T T block assembly. Row blocks of U^T: [S^1 | S^2 | -d^1 | -d^2
        // | -v^1 | -v^2]; column blocks of T: [G S^1 | G S^2 | G v^1 | G v^2
        // | G w^1 | G w^2]. The three product identities used:
        //   S^s^T G S^sb   = K o (D^s L D^sb^T)
        //   S^s^T G vec(Y) = (D^s o (K Y L)) 1
        //   vec(X)^T G vec(Y) = <X, K Y L>_F
        for (int s : {1, 2}) {
            const int row0 = (s - 1) * n;
            const Eigen::Index drow = 2 * n + (s - 1);
            const Eigen::Index vrow = 2 * n + 2 + (s - 1);
            for (int sb : {1, 2}) {
                const int col0 = (sb - 1) * n;
                pre.cov_block.block(row0, col0, n, n) =
                    K.cwiseProduct(DL[s - 1] * D[sb - 1].transpose());
                // rows of S^sb against the vector columns of T
                pre.cov_block.block(col0, 2 * n + (s - 1), n, 1) =
                    D[sb - 1].cwiseProduct(KVL[s - 1]).rowwise().sum();
                pre.cov_block.block(col0, 2 * n + 2 + (s - 1), n, 1) =
                    D[sb - 1].cwiseProduct(KWL[s - 1]).rowwise().sum();
                // -d^s and -v^s rows against the S-columns of T
                pre.cov_block.block(drow, col0, 1, n) =
                    -(D[sb - 1].cwiseProduct(KDL[s - 1]).rowwise().sum()).transpose();
                pre.cov_block.block(vrow, col0, 1, n) =
                    -(D[sb - 1].cwiseProduct(KVL[s - 1]).rowwise().sum()).transpose();
                // scalar corner entries
                pre.cov_block(drow, 2 * n + (sb - 1)) = -D[s - 1].cwiseProduct(KVL[sb - 1]).sum();
                pre.cov_block(drow, 2 * n + 2 + (sb - 1)) =
                    -D[s - 1].cwiseProduct(KWL[sb - 1]).sum();
                pre.cov_block(vrow, 2 * n + (sb - 1)) = -V[s - 1].cwiseProduct(KVL[sb - 1]).sum();
                pre.cov_block(vrow, 2 * n + 2 + (sb - 1)) =
                    -V[s - 1].cwiseProduct(KWL[sb - 1]).sum();
            }
        }
    }

    pre.trace_cov = pre.cov_block.trace();
    pre.epsilon = rule.is_fixed ? rule.value : epsilon_heuristic(pre.trace_cov, rule.gamma);
    const double eps = pre.epsilon;

    Matrix z = (1.0 - eps) * pre.cov_block;
    z.diagonal().array() += eps;
    pre.solver.compute(z);
    if (pre.solver.matrixLU().diagonal().cwiseAbs().minCoeff() == 0.0)
        throw NumericsError("singular regularized covariance");

    // Multiplier projections: U^T G c^(b) = A_U xi and T^T c^(b) = A_T xi.
    Matrix a_u(m, n), a_t(m, n);
    for (int s : {1, 2}) {
        a_u.middleRows((s - 1) * n, n) = pre.split_forms[s - 1];
        a_t.middleRows((s - 1) * n, n) = pre.split_forms[s - 1];
        a_u.row(2 * n + (s - 1)) = -pre.split_forms[s - 1].colwise().sum();
        a_u.row(2 * n + 2 + (s - 1)) = -pre.plug_in_dots[s - 1].transpose();
        a_t.row(2 * n + (s - 1)) = pre.plug_in_dots[s - 1].transpose();
        a_t.row(2 * n + 2 + (s - 1)) = pre.centered_dots[s - 1].transpose();
    }
    pre.t_proj_unit = a_t.rowwise().sum();
    pre.ug_proj_unit = a_u.rowwise().sum();

    if (eps == 1.0) {
        pre.replicate_form = pre.mmd_form;
    } else {
        Matrix solved = pre.solver.solve(a_u);
        pre.replicate_form =
            (1.0 / eps) * pre.mmd_form - ((1.0 - eps) / eps) * (a_t.transpose() * solved);
    }
    return pre;
}

Statistic wald_statistic(const WaldPrecompute& pre, const Matrix& coef, const Matrix& gram_x,
                         const Matrix& gram_y, int n) {
    if (pre.n != n || coef.rows() != n || gram_x.rows() != n || gram_y.rows() != n)
        throw DomainError("wald_statistic inputs do not match the precompute");
    Statistic stat;
    stat.kind = StatKind::kWald;
    stat.n = n;
    stat.epsilon = pre.epsilon;
    const double eps = pre.epsilon;
    if (eps == 1.0) {
        stat.value = clamp_tiny_negative(n * pre.base_norm_sq);
        return stat;
    }
    const Vector z = pre.solver.solve(pre.ug_proj_unit);
    const double correction = pre.t_proj_unit.dot(z);
    stat.value = clamp_tiny_negative((n / eps) * pre.base_norm_sq -
                                     (n * (1.0 - eps) / eps) * correction);
    return stat;
}

namespace dense {

Vector vec_row_major(const Matrix& a) {
    const auto rows = a.rows(), cols = a.cols();
    Vector v(rows * cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) v(i * cols + j) = a(i, j);
    return v;
}

Matrix kronecker(const Matrix& gram_x, const Matrix& gram_y) {
    const auto n = gram_x.rows();
    const auto q = gram_y.rows();
    Matrix g(n * q, n * q);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index ip = 0; ip < n; ++ip)
            g.block(i * q, ip * q, q, q) = gram_x(i, ip) * gram_y;
    return g;
}

Stacked stack_blocks(const Matrix& coef_one_step, const Matrix& coef_plug_in,
                     const Matrix& gram_x, const Matrix& gram_y, const FoldAssignment& folds) {
    const auto n = coef_one_step.rows();
    const Matrix g = kronecker(gram_x, gram_y);
    const Eigen::Index m = 2 * n + 4;

    Stacked out;
    out.t.resize(n * n, m);
    out.u.resize(n * n, m);
    for (int s : {1, 2}) {
        const double ns = folds.size(s);
        const Matrix d =
            fold_masked_scaled(coef_one_step, folds, s, std::sqrt(2.0 * ns));
        const Matrix v =
            fold_masked_scaled(coef_plug_in, folds, s, std::sqrt(2.0 / ns));
        const Matrix w = d - ns * v;

        Matrix split = Matrix::Zero(n * n, n); // S^s: column i holds row i of D^s in block i
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) split(i * n + j, i) = d(i, j);

        out.t.middleCols((s - 1) * n, n) = g * split;
        out.t.col(2 * n + (s - 1)) = g * vec_row_major(v);
        out.t.col(2 * n + 2 + (s - 1)) = g * vec_row_major(w);

        out.u.middleCols((s - 1) * n, n) = split;
        out.u.col(2 * n + (s - 1)) = -vec_row_major(d);
        out.u.col(2 * n + 2 + (s - 1)) = -vec_row_major(v);
    }
    return out;
}

} // namespace dense

double brute_force_statistic(const Matrix& coef_one_step, const Matrix& coef_plug_in,
                             const Matrix& gram_x, const Matrix& gram_y,
                             const FoldAssignment& folds, std::optional<double> epsilon) {
    const auto n = coef_one_step.rows();
    if (n > 40) throw DomainError("brute_force_statistic limited to n <= 40");
    const Vector c = dense::vec_row_major(coef_one_step);
    const Matrix g = dense::kronecker(gram_x, gram_y);
    if (!epsilon) return static_cast<double>(n) * c.dot(g * c);

    const double eps = *epsilon;
    if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("epsilon must lie in (0, 1]");
    dense::Stacked stacked =
        dense::stack_blocks(coef_one_step, coef_plug_in, gram_x, gram_y, folds);
    Matrix a = (1.0 - eps) * (stacked.t * stacked.u.transpose());
    a.diagonal().array() += eps;
    const Vector solved = a.partialPivLu().solve(g * c);
    return static_cast<double>(n) * c.dot(solved);
}

} // namespace skcd
