#include <doctest.h>

#include "skcd/errors.hpp"
#include "skcd/estimator.hpp"
#include "skcd/kernels.hpp"
#include "test_support.hpp"

using namespace skcd;

namespace {

OutcomeWeights empty_weights() {
    OutcomeWeights w;
    w.lambda = 1e-3;
    return w;
}

FoldAssignment two_point_folds() {
    FoldAssignment folds;
    folds.fold_of = {1, 2};
    folds.finalize();
    return folds;
}

} // namespace

TEST_CASE("one-step coefficients: two-point hand case") {
    // One point per fold, w = 0.5 each, a = (1, 0), no outcome model.
    const FoldAssignment folds = two_point_folds();
    const Vector w = Vector::Constant(2, 0.5);
    const Matrix c = build_one_step_coefficients({1, 0}, folds, w, empty_weights());
    CHECK(c(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c(1, 1) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(c(0, 1) == 0.0);
    CHECK(c(1, 0) == 0.0);
}

TEST_CASE("clipped propensity pushes the diagonal to 1/(2 n_s)") {
    const FoldAssignment folds = two_point_folds();
    Vector w(2);
    w << 1.0 - 1e-6, 0.5;
    const Matrix c = build_one_step_coefficients({1, 0}, folds, w, empty_weights());
    CHECK(std::abs(c(0, 0) - 0.5) < 1e-5); // 1/(2 n_s) with n_s = 1
}

TEST_CASE("coefficient matrices match the scalar-loop reconstruction") {
    const auto inst = testsupport::random_instance(8, 21);
    const Matrix naive_c =
        testsupport::naive_one_step(inst.sim.data.treatment, inst.art.folds,
                                    inst.art.propensity.w, inst.art.grams.covariate, 1e-3);
    const Matrix naive_e = testsupport::naive_plug_in(inst.sim.data.treatment, inst.art.folds,
                                                      inst.art.grams.covariate, 1e-3);
    CHECK((inst.art.coef.one_step - naive_c).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((inst.art.coef.plug_in - naive_e).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("plug-in coefficients cancel and vanish") {
    SUBCASE("no outcome model gives zero") {
        const FoldAssignment folds = two_point_folds();
        CHECK(build_plug_in_coefficients(folds, empty_weights()).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("identical arm weights cancel exactly") {
        FoldAssignment folds;
        folds.fold_of = {1, 1, 2, 2};
        folds.finalize();
        OutcomeWeights w = empty_weights();
        Matrix block(2, 2);
        block << 0.3, 0.7, 0.1, 0.9;
        for (int fold : {1, 2}) {
            const std::vector<int> cols = fold == 1 ? std::vector<int>{2, 3}
                                                    : std::vector<int>{0, 1};
            for (int arm : {0, 1}) {
                w.weight_blocks[static_cast<std::size_t>(fold - 1)]
                               [static_cast<std::size_t>(arm)] = block;
                w.column_map[static_cast<std::size_t>(fold - 1)]
                            [static_cast<std::size_t>(arm)] = cols;
            }
        }
        const Matrix e = build_plug_in_coefficients(folds, w);
        CHECK(e.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("fold-support sparsity holds exactly") {
    const auto inst = testsupport::random_instance(10, 33);
    const Matrix& c = inst.art.coef.one_step;
    const Matrix& e = inst.art.coef.plug_in;
    const auto& folds = inst.art.folds;
    for (int i = 0; i < 10; ++i) {
        const int r = 3 - folds.fold_of[static_cast<std::size_t>(i)];
        for (int j = 0; j < 10; ++j) {
            CHECK(e(i, i) == 0.0);
            if (i == j) continue;
            if (folds.fold_of[static_cast<std::size_t>(j)] != r) {
                CHECK(c(i, j) == 0.0);
                CHECK(e(i, j) == 0.0);
            }
        }
    }
}

TEST_CASE("diagonal row sums reduce to the inverse-propensity mean when models vanish") {
    const auto sim = testsupport::small_sim(12, 44);
    const FoldAssignment folds = make_folds(12, sim.data.treatment, 7);
    const Vector& w = sim.true_propensity;
    const Matrix c = build_one_step_coefficients(sim.data.treatment, folds, w, empty_weights());
    for (int fold : {1, 2}) {
        double lhs = 0.0, rhs = 0.0;
        for (int i : folds.indices(fold)) {
            lhs += c(i, i);
            const double a = sim.data.treatment[static_cast<std::size_t>(i)];
            rhs += (a / w(i) - (1.0 - a) / (1.0 - w(i)));
        }
        rhs /= 2.0 * folds.size(fold);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-15));
    }
}

TEST_CASE("witness evaluation") {
    SUBCASE("zero coefficients give zero everywhere") {
        const Matrix c = Matrix::Zero(4, 4);
        CHECK(witness_value(c, Vector::Ones(4), Vector::Ones(4)) == 0.0);
    }
    SUBCASE("diagonal picks out a single entry") {
        Matrix c = Matrix::Zero(2, 2);
        c(0, 0) = 1.0;
        c(1, 1) = -1.0;
        Vector kx(2), ly(2);
        kx << 1, 0;
        ly << 1, 0;
        CHECK(witness_value(c, kx, ly) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("matches the double-loop expansion") {
        const auto inst = testsupport::random_instance(8, 55);
        Rng rng(3);
        Vector x(1), y(1);
        x << rng.uniform(-1.0, 1.0);
        y << rng.uniform(-1.0, 1.0);
        const Vector kx = kernel_vector(inst.sim.data.covariates, x, inst.art.kernel_x);
        const Vector ly = kernel_vector(inst.sim.data.outcomes, y, inst.art.kernel_y);
        const Matrix& c = inst.art.coef.one_step;
        double naive = 0.0;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) naive += c(i, j) * kx(i) * ly(j);
        CHECK(std::abs(witness_value(c, kx, ly) - naive) < 1e-14);
        // The grid variant agrees with scalar evaluation.
        Matrix lgrid(8, 2);
        lgrid.col(0) = ly;
        lgrid.col(1) = ly * 0.5;
        const Vector values = witness_values(c, kx, lgrid);
        CHECK(std::abs(values(0) - naive) < 1e-14);
    }
}

TEST_CASE("squared RKHS norm") {
    SUBCASE("zero matrix") {
        CHECK(squared_rkhs_norm(Matrix::Zero(3, 3), Matrix::Identity(3, 3),
                                Matrix::Identity(3, 3)) == 0.0);
    }
    SUBCASE("identity grams reduce to the Frobenius norm") {
        const auto inst = testsupport::random_instance(6, 66);
        const Matrix& c = inst.art.coef.one_step;
        CHECK(squared_rkhs_norm(c, Matrix::Identity(6, 6), Matrix::Identity(6, 6)) ==
              doctest::Approx(c.squaredNorm()).epsilon(1e-12));
    }
    SUBCASE("matches the quadruple sum and stays nonnegative") {
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
            const auto inst = testsupport::random_instance(8, 70 + seed);
            const double value = squared_rkhs_norm(inst.art.coef.one_step, inst.art.grams.covariate,
                                                   inst.art.grams.outcome);
            const double naive = testsupport::norm_sq_quadruple(inst.art.coef.one_step,
                                                                inst.art.grams.covariate,
                                                                inst.art.grams.outcome);
            CHECK(testsupport::rel_err(value, naive) < 1e-12);
            CHECK(value >= -1e-10);
        }
    }
}
