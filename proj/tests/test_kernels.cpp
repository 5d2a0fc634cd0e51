#include <doctest.h>

#include <algorithm>

#include "skcd/errors.hpp"
#include "skcd/kernels.hpp"
#include "skcd/rng.hpp"
#include "test_support.hpp"

using namespace skcd;

namespace {

Matrix random_points(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

// Independent scalar-loop median of pairwise distances (lower median).
double naive_median(const Matrix& points) {
    std::vector<double> dists;
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        for (Eigen::Index j = i + 1; j < points.rows(); ++j)
            dists.push_back((points.row(i) - points.row(j)).norm());
    std::sort(dists.begin(), dists.end());
    return dists[(dists.size() - 1) / 2];
}

} // namespace

TEST_CASE("median heuristic on hand cases") {
    Matrix pts(3, 1);
    pts << 0, 1, 3;
    CHECK(median_heuristic(pts) == doctest::Approx(2.0).epsilon(1e-15));

    Matrix pair(2, 1);
    pair << 0, 1;
    CHECK(median_heuristic(pair) == doctest::Approx(1.0).epsilon(1e-15));

    Matrix same = Matrix::Ones(5, 2);
    CHECK_THROWS_AS(median_heuristic(same), NumericsError);
}

TEST_CASE("median heuristic matches exhaustive computation in 5-D") {
    const Matrix pts = random_points(1000, 5, 31);
    const double value = median_heuristic(pts);
    CHECK(value == doctest::Approx(naive_median(pts)).epsilon(1e-10));
    // For N(0, I_5) differences are sqrt(2 chi^2_5); median chi^2_5 = 4.35146
    const double theory = std::sqrt(2.0 * 4.35146);
    CHECK(std::abs(value - theory) / theory < 0.1);
}

TEST_CASE("gram matches naive evaluation") {
    const Matrix pts = random_points(6, 3, 17);
    const KernelSpec spec = KernelSpec::fixed(1.3);
    const Matrix g = gram(pts, spec);
    for (int i = 0; i < 6; ++i) {
        CHECK(g(i, i) == 1.0);
        for (int j = 0; j < 6; ++j) {
            const double d2 = (pts.row(i) - pts.row(j)).squaredNorm();
            CHECK(std::abs(g(i, j) - std::exp(-d2 / (2.0 * 1.3 * 1.3))) < 1e-14);
            CHECK(g(i, j) == g(j, i)); // exact symmetry
        }
    }
}

TEST_CASE("gram hand case: points {0,1}, sigma 1") {
    Matrix pts(2, 1);
    pts << 0, 1;
    const Matrix g = gram(pts, KernelSpec::fixed(1.0));
    CHECK(g(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
}

TEST_CASE("gram is positive semidefinite in the quadratic-form sense") {
    const Matrix pts = random_points(40, 4, 3);
    const Matrix g = gram(pts, KernelSpec::fixed(0.9));
    Rng rng(4);
    for (int trial = 0; trial < 25; ++trial) {
        Vector v(40);
        for (int i = 0; i < 40; ++i) v(i) = rng.normal();
        CHECK(v.dot(g * v) >= -1e-10);
    }
}

TEST_CASE("scaling covariance of the gram") {
    const Matrix pts = random_points(8, 2, 9);
    const double c = 2.75;
    const Matrix a = gram(pts, KernelSpec::fixed(0.7));
    const Matrix b = gram(pts * c, KernelSpec::fixed(0.7 * c));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("kernel_vector behaviour") {
    const Matrix pts = random_points(7, 3, 21);
    const KernelSpec spec = KernelSpec::fixed(1.1);

    SUBCASE("self query gives 1 and matches the gram row") {
        const Matrix g = gram(pts, spec);
        const Vector v = kernel_vector(pts, pts.row(3).transpose(), spec);
        CHECK(v(3) == 1.0);
        for (int i = 0; i < 7; ++i) CHECK(std::abs(v(i) - g(3, i)) < 1e-14);
    }
    SUBCASE("distant query decays below 1e-10") {
        const Vector far = Vector::Constant(3, 50.0);
        const Vector v = kernel_vector(pts, far, spec);
        CHECK(v.maxCoeff() < 1e-10);
    }
    SUBCASE("matches naive per-entry evaluation") {
        Rng rng(2);
        Vector q(3);
        for (int j = 0; j < 3; ++j) q(j) = rng.normal();
        const Vector v = kernel_vector(pts, q, spec);
        for (int i = 0; i < 7; ++i) {
            const double d2 = (pts.row(i).transpose() - q).squaredNorm();
            CHECK(std::abs(v(i) - std::exp(-d2 / (2.0 * 1.1 * 1.1))) < 1e-14);
        }
    }
}

TEST_CASE("resolve runs the heuristic once") {
    const Matrix pts = random_points(30, 2, 40);
    const KernelSpec resolved = resolve(KernelSpec::median(), pts);
    CHECK(!resolved.use_median_heuristic);
    CHECK(resolved.bandwidth == doctest::Approx(naive_median(pts)).epsilon(1e-12));
    CHECK_THROWS_AS(gram(pts, KernelSpec::median()), DomainError);
}
