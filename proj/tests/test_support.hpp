#pragma once

// Shared fixtures and independent reference computations for the test
// suites. The reference routines here deliberately use plain scalar loops
// so they stay independent of the library's linear-algebra paths.

#include <algorithm>
#include <cmath>
#include <vector>

#include "skcd/inference.hpp"

namespace testsupport {

using skcd::Matrix;
using skcd::Vector;

/// Small simulated dataset with both arms guaranteed to have >= 2 members
/// (retries seeds deterministically; needed for tiny n).
inline skcd::SimulatedData small_sim(int n, std::uint64_t seed,
                                     skcd::Hypothesis hyp = skcd::Hypothesis::kAlternative) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        skcd::SimulatedData sim =
            skcd::simulate_fig1(n, hyp, skcd::PropensityDesign::kConstantHalf,
                                seed + 1000 * attempt);
        int treated = 0;
        for (int a : sim.data.treatment) treated += a;
        if (treated >= 2 && n - treated >= 2) return sim;
    }
}

struct Instance {
    skcd::SimulatedData sim;
    skcd::PipelineArtifacts art;
};

/// Pipeline-realistic small instance with known propensities.
inline Instance random_instance(int n, std::uint64_t seed) {
    Instance inst{small_sim(n, seed), {}};
    skcd::TestConfig config;
    config.propensity.method = skcd::PropensityMethod::kKnown;
    config.propensity.known = inst.sim.true_propensity;
    config.seed = seed;
    inst.art = skcd::fit_pipeline(inst.sim.data, config);
    return inst;
}

/// Quadruple-sum evaluation of <C, K C L>_F by scalar loops.
inline double norm_sq_quadruple(const Matrix& c, const Matrix& k, const Matrix& l) {
    const auto n = c.rows();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index ip = 0; ip < n; ++ip)
                for (Eigen::Index jp = 0; jp < n; ++jp)
                    acc += c(i, j) * c(ip, jp) * k(i, ip) * l(j, jp);
    return acc;
}

/// Naive per-arm ridge weights via an explicit dense inverse.
inline Matrix naive_krr_weights(const Matrix& gram, const std::vector<int>& queries,
                                const std::vector<int>& train, double lambda) {
    const auto m = static_cast<Eigen::Index>(train.size());
    Matrix sys(m, m);
    for (Eigen::Index p = 0; p < m; ++p)
        for (Eigen::Index q = 0; q < m; ++q)
            sys(p, q) = gram(train[static_cast<std::size_t>(p)],
                             train[static_cast<std::size_t>(q)]);
    sys.diagonal().array() += lambda;
    const Matrix inv = sys.inverse();
    Matrix out(static_cast<Eigen::Index>(queries.size()), m);
    for (std::size_t r = 0; r < queries.size(); ++r)
        for (Eigen::Index cidx = 0; cidx < m; ++cidx) {
            double acc = 0.0;
            for (Eigen::Index p = 0; p < m; ++p)
                acc += gram(queries[r], train[static_cast<std::size_t>(p)]) * inv(p, cidx);
            out(static_cast<Eigen::Index>(r), cidx) = acc;
        }
    return out;
}

/// Scalar-loop reconstruction of the one-step coefficient matrix from the
/// raw ingredients (treatment, folds, propensities, naive ridge weights).
inline Matrix naive_one_step(const std::vector<int>& treatment, const skcd::FoldAssignment& folds,
                             const Vector& w, const Matrix& gram_x, double lambda) {
    const int n = folds.n();
    Matrix c = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int s = folds.fold_of[static_cast<std::size_t>(i)];
        const int r = 3 - s;
        const double ns = folds.size(s);
        const double a = treatment[static_cast<std::size_t>(i)];
        c(i, i) = (a / w(i) - (1.0 - a) / (1.0 - w(i))) / (2.0 * ns);
        for (int arm : {0, 1}) {
            std::vector<int> train;
            for (int j : folds.indices(r))
                if (treatment[static_cast<std::size_t>(j)] == arm) train.push_back(j);
            if (train.empty()) continue;
            const Matrix beta = naive_krr_weights(gram_x, {i}, train, lambda);
            const double gain = arm == 1 ? (1.0 - a / w(i))
                                         : ((1.0 - a) / (1.0 - w(i)) - 1.0);
            for (std::size_t idx = 0; idx < train.size(); ++idx)
                c(i, train[idx]) += gain * beta(0, static_cast<Eigen::Index>(idx)) / (2.0 * ns);
        }
    }
    return c;
}

inline Matrix naive_plug_in(const std::vector<int>& treatment, const skcd::FoldAssignment& folds,
                            const Matrix& gram_x, double lambda) {
    const int n = folds.n();
    Matrix e = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int s = folds.fold_of[static_cast<std::size_t>(i)];
        const int r = 3 - s;
        const double ns = folds.size(s);
        for (int arm : {0, 1}) {
            std::vector<int> train;
            for (int j : folds.indices(r))
                if (treatment[static_cast<std::size_t>(j)] == arm) train.push_back(j);
            if (train.empty()) continue;
            const Matrix beta = naive_krr_weights(gram_x, {i}, train, lambda);
            const double sign = arm == 1 ? 1.0 : -1.0;
            for (std::size_t idx = 0; idx < train.size(); ++idx)
                e(i, train[idx]) += sign * beta(0, static_cast<Eigen::Index>(idx)) / (2.0 * ns);
        }
    }
    return e;
}

/// Two-sample Kolmogorov-Smirnov check at the given level (asymptotic
/// critical value). Returns true when the null "same distribution" is NOT
/// rejected.
inline bool ks_two_sample_pass(std::vector<double> a, std::vector<double> b, double level) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
        if (a[ia] <= b[ib])
            ++ia;
        else
            ++ib;
        d = std::max(d, std::abs(ia / na - ib / nb));
    }
    // c(alpha) = sqrt(-ln(alpha/2)/2)
    const double c = std::sqrt(-std::log(level / 2.0) / 2.0);
    return d <= c * std::sqrt((na + nb) / (na * nb));
}

inline double rel_err(double value, double reference) {
    return std::abs(value - reference) / (1.0 + std::abs(reference));
}

} // namespace testsupport
