#include <doctest.h>

#include "skcd/errors.hpp"
#include "skcd/statistics.hpp"
#include "test_support.hpp"

using namespace skcd;

TEST_CASE("mmd statistic hand cases") {
    FoldAssignment folds;
    folds.fold_of = {1, 2};
    folds.finalize();

    CHECK(mmd_statistic(Matrix::Zero(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2), 2)
              .value == 0.0);

    Matrix c = Matrix::Zero(2, 2);
    c(0, 0) = 1.0;
    c(1, 1) = -1.0;
    const Statistic stat = mmd_statistic(c, Matrix::Identity(2, 2), Matrix::Identity(2, 2), 2);
    CHECK(stat.value == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(stat.kind == StatKind::kMmd);
}

TEST_CASE("mmd statistic equals the quadruple sum at n=10") {
    const auto inst = testsupport::random_instance(10, 5);
    const double value =
        mmd_statistic(inst.art.coef.one_step, inst.art.grams.covariate, inst.art.grams.outcome, 10).value;
    const double naive = 10.0 * testsupport::norm_sq_quadruple(inst.art.coef.one_step,
                                                               inst.art.grams.covariate,
                                                               inst.art.grams.outcome);
    CHECK(testsupport::rel_err(value, naive) < 1e-10);
}

TEST_CASE("epsilon heuristic") {
    CHECK(epsilon_heuristic(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(epsilon_heuristic(0.0, 2.0) == doctest::Approx(1e-8).epsilon(1e-12));
    CHECK(epsilon_heuristic(-1e-12, 2.0) == doctest::Approx(1e-8).epsilon(1e-12));
    CHECK(epsilon_heuristic(3.0, 1.0 / 3.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(epsilon_heuristic(1.0, 0.0), DomainError);
    CHECK_THROWS_AS(epsilon_heuristic(1.0, -2.0), DomainError);
    // strictly increasing in gamma for fixed positive trace
    double prev = 0.0;
    for (double gamma : {0.1, 0.5, 1.0, 2.0, 10.0}) {
        const double eps = epsilon_heuristic(1.0, gamma);
        CHECK(eps > prev);
        prev = eps;
    }
}

TEST_CASE("covariance block matches the dense stack at n=6") {
    for (std::uint64_t seed : {3ULL, 4ULL}) {
        const auto inst = testsupport::random_instance(6, seed);
        const Matrix& c = inst.art.coef.one_step;
        const Matrix& e = inst.art.coef.plug_in;
        const WaldPrecompute pre =
            build_wald_precompute(c, e, inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds, 0.4);
        const dense::Stacked stacked =
            dense::stack_blocks(c, e, inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds);
        const Matrix dense_cov = stacked.u.transpose() * stacked.t;
        CHECK((pre.cov_block - dense_cov).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(pre.trace_cov == doctest::Approx(dense_cov.trace()).epsilon(1e-10));
    }
}

TEST_CASE("zero coefficients give a zero covariance block") {
    FoldAssignment folds;
    folds.fold_of = {1, 1, 2, 2};
    folds.finalize();
    const Matrix zero = Matrix::Zero(4, 4);
    const Matrix k = Matrix::Identity(4, 4);
    const WaldPrecompute pre = build_wald_precompute(zero, zero, k, k, folds, 0.3);
    CHECK(pre.cov_block.cwiseAbs().maxCoeff() == 0.0);
    // Z = eps I, so solving against any vector rescales by 1/eps.
    Vector rhs = Vector::Ones(12);
    CHECK((pre.solver.solve(rhs) - rhs / 0.3).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(wald_statistic(pre, zero, k, k, 4).value == 0.0);
}

TEST_CASE("covariance trace is nonnegative and matches the influence expansion") {
    for (std::uint64_t seed : {6ULL, 7ULL, 8ULL}) {
        const auto inst = testsupport::random_instance(8, seed);
        const Matrix& c = inst.art.coef.one_step;
        const Matrix& e = inst.art.coef.plug_in;
        const auto& folds = inst.art.folds;
        const WaldPrecompute pre =
            build_wald_precompute(c, e, inst.art.grams.covariate, inst.art.grams.outcome, folds, 0.5);
        CHECK(pre.trace_cov >= -1e-10);

        // (1/2) sum_r n_s^{-1} sum_{k in I_s} |phi_k|^2 with the influence
        // coefficient matrices assembled from 2 n_s C rows and 2 E rows.
        double expansion = 0.0;
        for (int fold : {1, 2}) {
            const double ns = folds.size(fold);
            double fold_sum = 0.0;
            for (int i : folds.indices(fold)) {
                Matrix phi = Matrix::Zero(8, 8);
                phi.row(i) += 2.0 * ns * c.row(i);
                for (int ii : folds.indices(fold)) phi.row(ii) -= 2.0 * e.row(ii);
                fold_sum += testsupport::norm_sq_quadruple(phi, inst.art.grams.covariate,
                                                           inst.art.grams.outcome);
            }
            expansion += 0.5 * fold_sum / ns;
        }
        CHECK(testsupport::rel_err(pre.trace_cov, expansion) < 1e-8);
    }
}

TEST_CASE("wald statistic agrees with the dense oracle") {
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
        const int n = 6;
        const auto inst = testsupport::random_instance(n, seed);
        const Matrix& c = inst.art.coef.one_step;
        const Matrix& e = inst.art.coef.plug_in;
        for (double eps : {0.3, 0.7}) {
            const WaldPrecompute pre =
                build_wald_precompute(c, e, inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds,
                                      eps);
            const double closed =
                wald_statistic(pre, c, inst.art.grams.covariate, inst.art.grams.outcome, n).value;
            const double oracle = brute_force_statistic(c, e, inst.art.grams.covariate, inst.art.grams.outcome,
                                                        inst.art.folds, eps);
            CHECK(testsupport::rel_err(closed, oracle) < 1e-8);
            CHECK(closed >= -1e-8);
        }
    }
}

TEST_CASE("wald at eps=1 degenerates to the mmd statistic") {
    for (std::uint64_t seed = 20; seed < 26; ++seed) {
        const int n = 4 + static_cast<int>(seed % 5);
        const auto inst = testsupport::random_instance(n, seed);
        const WaldPrecompute pre =
            build_wald_precompute(inst.art.coef.one_step, inst.art.coef.plug_in,
                                  inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds, 1.0);
        const double wald =
            wald_statistic(pre, inst.art.coef.one_step, inst.art.grams.covariate, inst.art.grams.outcome, n)
                .value;
        const double mmd =
            mmd_statistic(inst.art.coef.one_step, inst.art.grams.covariate, inst.art.grams.outcome, n).value;
        CHECK(testsupport::rel_err(wald, mmd) < 1e-12);
    }
}

TEST_CASE("brute-force oracle self-checks") {
    SUBCASE("hand case: scaled identity") {
        FoldAssignment folds;
        folds.fold_of = {1, 1, 2, 2};
        folds.finalize();
        const Matrix c = 0.1 * Matrix::Identity(4, 4);
        const Matrix k = Matrix::Identity(4, 4);
        const double value = brute_force_statistic(c, Matrix::Zero(4, 4), k, k, folds,
                                                   std::nullopt);
        CHECK(value == doctest::Approx(0.16).epsilon(1e-12));
    }
    SUBCASE("cross-agreement with the closed-form mmd") {
        for (std::uint64_t seed = 30; seed < 50; ++seed) {
            const int n = 4 + static_cast<int>(seed % 7);
            const auto inst = testsupport::random_instance(n, seed);
            const double closed =
                mmd_statistic(inst.art.coef.one_step, inst.art.grams.covariate, inst.art.grams.outcome, n)
                    .value;
            const double oracle =
                brute_force_statistic(inst.art.coef.one_step, inst.art.coef.plug_in,
                                      inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds,
                                      std::nullopt);
            CHECK(testsupport::rel_err(closed, oracle) < 1e-10);
        }
    }
    SUBCASE("eps=1 wald oracle equals the mmd oracle") {
        const auto inst = testsupport::random_instance(6, 51);
        const double mmd =
            brute_force_statistic(inst.art.coef.one_step, inst.art.coef.plug_in,
                                  inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds,
                                  std::nullopt);
        const double wald =
            brute_force_statistic(inst.art.coef.one_step, inst.art.coef.plug_in,
                                  inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds, 1.0);
        CHECK(testsupport::rel_err(wald, mmd) < 1e-10);
    }
    SUBCASE("size guard") {
        FoldAssignment folds;
        folds.fold_of.assign(44, 1);
        for (int i = 22; i < 44; ++i) folds.fold_of[static_cast<std::size_t>(i)] = 2;
        folds.finalize();
        const Matrix big = Matrix::Zero(44, 44);
        CHECK_THROWS_AS(brute_force_statistic(big, big, big, big, folds, std::nullopt),
                        DomainError);
    }
}

TEST_CASE("bootstrap quadratic form is positive semidefinite") {
    const auto inst = testsupport::random_instance(10, 60);
    const WaldPrecompute pre =
        build_wald_precompute(inst.art.coef.one_step, inst.art.coef.plug_in, inst.art.grams.covariate,
                              inst.art.grams.outcome, inst.art.folds, 0.5);
    Rng rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        Vector v(10);
        for (int i = 0; i < 10; ++i) v(i) = rng.normal();
        CHECK(v.dot(pre.mmd_form * v) >= -1e-10);
    }
}

TEST_CASE("closed forms track the oracle across epsilon and size") {
    for (std::uint64_t seed = 70; seed < 76; ++seed) {
        const int n = 4 + static_cast<int>(seed % 7);
        const auto inst = testsupport::random_instance(n, seed);
        const Matrix& c = inst.art.coef.one_step;
        const Matrix& e = inst.art.coef.plug_in;
        for (double eps : {0.1, 0.5, 1.0}) {
            const WaldPrecompute pre = build_wald_precompute(c, e, inst.art.grams.covariate,
                                                             inst.art.grams.outcome, inst.art.folds,
                                                             eps);
            const double closed =
                wald_statistic(pre, c, inst.art.grams.covariate, inst.art.grams.outcome, n).value;
            const double oracle = brute_force_statistic(c, e, inst.art.grams.covariate,
                                                        inst.art.grams.outcome, inst.art.folds, eps);
            CHECK(testsupport::rel_err(closed, oracle) < 1e-8);
        }
    }
}

TEST_CASE("precompute validates epsilon") {
    const auto inst = testsupport::random_instance(6, 80);
    CHECK_THROWS_AS(build_wald_precompute(inst.art.coef.one_step, inst.art.coef.plug_in,
                                          inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds,
                                          0.0),
                    DomainError);
    CHECK_THROWS_AS(build_wald_precompute(inst.art.coef.one_step, inst.art.coef.plug_in,
                                          inst.art.grams.covariate, inst.art.grams.outcome, inst.art.folds,
                                          1.5),
                    DomainError);
}
