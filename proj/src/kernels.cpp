#include "skcd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "skcd/errors.hpp"

namespace skcd {

namespace {

// Squared distances via the (|a|^2 + |b|^2 - 2 a.b) expansion, clipped at 0
// to guard against negative round-off.
Matrix squared_distances(const Matrix& a, const Matrix& b) {
    Vector na = a.rowwise().squaredNorm();
    Vector nb = b.rowwise().squaredNorm();
    Matrix d2 = -2.0 * (a * b.transpose());
    d2.colwise() += na;
    d2.rowwise() += nb.transpose();
    return d2.cwiseMax(0.0);
}

} // namespace

double median_heuristic(const Matrix& points) {
    const auto m = points.rows();
    if (m < 2) throw DomainError("median heuristic needs at least 2 points");
    Matrix d2 = squared_distances(points, points);
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(m - 1) / 2);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) dist.push_back(std::sqrt(d2(i, j)));
    const std::size_t k = (dist.size() - 1) / 2; // lower median
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    const double median = dist[k];
    if (!(median > 0.0)) throw NumericsError("degenerate bandwidth: median distance is zero");
    return median;
}

KernelSpec resolve(const KernelSpec& spec, const Matrix& points) {
    if (!spec.use_median_heuristic) {
        if (!(spec.bandwidth > 0.0)) throw DomainError("kernel bandwidth must be positive");
        return spec;
    }
    return KernelSpec::fixed(median_heuristic(points));
}

Matrix gram(const Matrix& points, const KernelSpec& spec) {
    if (spec.use_median_heuristic || !(spec.bandwidth > 0.0))
        throw DomainError("gram requires a resolved kernel spec");
    const auto m = points.rows();
    const double scale = -0.5 / (spec.bandwidth * spec.bandwidth);
    Matrix d2 = squared_distances(points, points);
    Matrix g(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        g(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double v = std::exp(scale * d2(i, j));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

Vector kernel_vector(const Matrix& points, const Eigen::Ref<const Vector>& query,
                     const KernelSpec& spec) {
    if (spec.use_median_heuristic || !(spec.bandwidth > 0.0))
        throw DomainError("kernel_vector requires a resolved kernel spec");
    if (points.cols() != query.size())
        throw DomainError("query dimension does not match points");
    const double scale = -0.5 / (spec.bandwidth * spec.bandwidth);
    Vector out(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double d2 = (points.row(i).transpose() - query).squaredNorm();
        out(i) = std::exp(scale * d2);
    }
    return out;
}

Matrix cross_gram(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
    if (spec.use_median_heuristic || !(spec.bandwidth > 0.0))
        throw DomainError("cross_gram requires a resolved kernel spec");
    const double scale = -0.5 / (spec.bandwidth * spec.bandwidth);
    return (squared_distances(a, b) * scale).array().exp().matrix();
}

} // namespace skcd
