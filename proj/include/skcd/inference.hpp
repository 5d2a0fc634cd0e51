#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skcd/dataset.hpp"
#include "skcd/estimator.hpp"
#include "skcd/kernels.hpp"
#include "skcd/nuisance.hpp"
#include "skcd/rng.hpp"
#include "skcd/statistics.hpp"

namespace skcd {

/// Zero-sum multiplier vector: independently per fold, one multinomial draw
/// with n_r trials over n_r equiprobable cells, minus one per cell. The
/// entries of each fold sum to zero exactly.
Vector draw_multipliers(const FoldAssignment& folds, Rng& rng);

/// MMD bootstrap replicate n xi^T M xi with M = K o (C L C^T); O(n^2).
double bootstrap_replicate_mmd(const Matrix& mmd_form, const Vector& multipliers, int n);

/// Wald bootstrap replicate via the stored LU factors: assembles
/// U^T G c^(b) and T^T c^(b) from the precomputed projections, solves
/// Z z = U^T G c^(b) by forward/back substitution, and returns
/// n [ (1/eps) xi^T M xi - ((1-eps)/eps) (T^T c^(b))^T z ]; O(n^2).
double bootstrap_replicate_wald(const WaldPrecompute& pre, const Vector& multipliers, int n);

/// Same value through the fused quadratic form n xi^T R xi with
/// R = (1/eps) M - ((1-eps)/eps) A_T^T Z^{-1} A_U precomputed; this is the
/// path used inside the test loop (one mat-vec per replicate).
double bootstrap_replicate_wald_amortized(const WaldPrecompute& pre, const Vector& multipliers,
                                          int n);

/// The ceil((1-alpha) B)-th order statistic (1-indexed).
double quantile(const std::vector<double>& values, double alpha);

/// Which nuisances see a restricted covariate set (deliberate
/// misspecification for calibration studies). The subset lists the
/// covariate column indices the affected nuisances may use; an empty subset
/// reduces them to constant-input models.
struct MisspecifyConfig {
    bool propensity = false;
    bool outcome = false;
    std::vector<int> kept_covariates;
};

struct TestConfig {
    StatKind stat = StatKind::kMmd;
    KernelSpec kernel_x = KernelSpec::median();
    KernelSpec kernel_y = KernelSpec::median();
    PropensityOptions propensity;
    double lambda = 1e-3;
    EpsilonRule epsilon = EpsilonRule::from_gamma(1.0 / 3.0);
    int bootstrap_samples = 1000; // B
    double alpha = 0.05;
    std::uint64_t seed = 0;
    int threads = 1;
    MisspecifyConfig misspecify;
};

/// Everything fitted once per dataset: folds, resolved kernels, Gram
/// matrices, nuisances and the coefficient matrices.
struct PipelineArtifacts {
    FoldAssignment folds;
    KernelSpec kernel_x, kernel_y; // resolved
    GramPair grams;
    PropensityFit propensity;
    OutcomeWeights outcome_weights;
    CoefficientMatrices coef;
};

PipelineArtifacts fit_pipeline(const Dataset& data, const TestConfig& config);

struct TestResult {
    Statistic statistic;
    std::vector<double> bootstrap_values;
    double quantile = 0.0;
    bool reject = false;
    double exceedance = 0.0; // (#{b : T^(b) >= T_n} + 1) / (B + 1)
    double alpha = 0.05;
    int bootstrap_samples = 0;
    std::uint64_t seed = 0;
    int n = 0;
    TestConfig config; // resolved echo
    std::vector<std::string> warnings;
};

/// Full test: folds, bandwidths, nuisances, coefficients, precompute,
/// observed statistic, B multiplier-bootstrap replicates, quantile and
/// decision. One-time cost O(n^3); each replicate O(n^2). Identical
/// (config, seed) gives identical results for any thread count.
TestResult skcd_test(const Dataset& data, const TestConfig& config);

struct BandResult {
    Vector profile_x;
    Matrix y_grid;       // G x d_y
    Vector witness;      // estimated witness per grid point
    Vector half_width;   // band half-width per grid point
    double alpha = 0.05;
    std::string kind;    // "mmd_slice", "mmd_global" or "wald_global"
    double qhat = 0.0;
    int bootstrap_samples = 0;
    std::uint64_t seed = 0;
    // resolved configuration echo
    double kernel_x_bandwidth = 0.0;
    double kernel_y_bandwidth = 0.0;
    double lambda = 0.0;
};

/// Uniform-in-y confidence band at a fixed covariate profile, built from
/// the rank-one restricted form M_x = (k_x k_x^T) o (C L C^T). The
/// half-width sqrt(qhat_x / n) is constant across the grid.
BandResult mmd_slice_band(const Dataset& data, const PipelineArtifacts& artifacts,
                          const Vector& profile_x, const Matrix& y_grid, int bootstrap_samples,
                          double alpha, std::uint64_t seed, int threads);

/// Half-width of the global band at one (x, y) query. For the MMD kind this
/// is sqrt(k(x,x) l(y,y) qhat / n); for the Wald kind the inverse operator
/// is applied exactly through (1-eps) Sigma + eps I.
double global_band_width(StatKind kind, const Dataset& data, const PipelineArtifacts& artifacts,
                         const Vector& x, const Vector& y, double epsilon, double qhat);

struct DgpConfig {
    int n = 500;
    Hypothesis hypothesis = Hypothesis::kNull;
    PropensityDesign design = PropensityDesign::kConstantHalf;
};

struct MonteCarloResult {
    double rate = 0.0;
    double ci_lo = 0.0; // 95% Wilson interval
    double ci_hi = 0.0;
    int rejections = 0;
    int replications = 0;
};

/// 95% Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(int successes, int trials);

/// Runs skcd_test on R fresh simulations with derived seeds and returns the
/// rejection fraction with a 95% Wilson interval. When the configured
/// propensity method is `known`, the simulator's true propensities are
/// passed through to each test.
MonteCarloResult monte_carlo_rejection_rate(const DgpConfig& dgp, const TestConfig& test_config,
                                            int replications, std::uint64_t master_seed,
                                            int threads);

} // namespace skcd
