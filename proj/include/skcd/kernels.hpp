#pragma once

#include "skcd/dataset.hpp"

namespace skcd {

/// Gaussian kernel exp(-||a-b||^2 / (2 sigma^2)). A spec either carries a
/// fixed bandwidth or the median-heuristic marker to be resolved on data.
struct KernelSpec {
    double bandwidth = 0.0;
    bool use_median_heuristic = true;

    static KernelSpec median() { return {0.0, true}; }
    static KernelSpec fixed(double sigma) { return {sigma, false}; }
};

/// Median of the m(m-1)/2 pairwise Euclidean distances (lower median for
/// even counts). Throws NumericsError("degenerate bandwidth") when the
/// median distance is zero.
double median_heuristic(const Matrix& points);

/// Returns a fixed-bandwidth spec, running the median heuristic if needed.
KernelSpec resolve(const KernelSpec& spec, const Matrix& points);

/// Gram matrix of the Gaussian kernel; symmetric by construction with unit
/// diagonal. Requires a resolved spec (bandwidth > 0).
Matrix gram(const Matrix& points, const KernelSpec& spec);

/// Vector [k(p_1, q), ..., k(p_m, q)].
Vector kernel_vector(const Matrix& points, const Eigen::Ref<const Vector>& query,
                     const KernelSpec& spec);

/// Kernel matrix between two point sets: entry (i, j) = k(a_i, b_j).
Matrix cross_gram(const Matrix& a, const Matrix& b, const KernelSpec& spec);

struct GramPair {
    Matrix covariate; // K, n x n
    Matrix outcome;   // L, n x n
};

} // namespace skcd
