#include "skcd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "skcd/errors.hpp"
#include "skcd/parallel.hpp"

namespace skcd {

Vector draw_multipliers(const FoldAssignment& folds, Rng& rng) {
    Vector xi(folds.n());
    std::vector<int> counts;
    for (int fold : {1, 2}) {
        const auto& idx = folds.indices(fold);
        const std::size_t cells = idx.size();
        counts.assign(cells, 0);
        for (std::size_t t = 0; t < cells; ++t)
            ++counts[static_cast<std::size_t>(rng.uniform_below(cells))];
        for (std::size_t q = 0; q < cells; ++q) xi(idx[q]) = counts[q] - 1.0;
    }
    return xi;
}

double bootstrap_replicate_mmd(const Matrix& mmd_form, const Vector& multipliers, int n) {
    return n * multipliers.dot(mmd_form * multipliers);
}

double bootstrap_replicate_wald(const WaldPrecompute& pre, const Vector& multipliers, int n) {
    const double eps = pre.epsilon;
    const double quad = multipliers.dot(pre.mmd_form * multipliers);
    if (eps == 1.0) return n * quad;

    const int m = 2 * n + 4;
    Vector ug(m), tc(m);
    for (int s : {1, 2}) {
        const Vector hs = pre.split_forms[s - 1] * multipliers;
        ug.segment((s - 1) * n, n) = hs;
        tc.segment((s - 1) * n, n) = hs;
        ug(2 * n + (s - 1)) = -hs.sum();
        ug(2 * n + 2 + (s - 1)) = -pre.plug_in_dots[s - 1].dot(multipliers);
        tc(2 * n + (s - 1)) = pre.plug_in_dots[s - 1].dot(multipliers);
        tc(2 * n + 2 + (s - 1)) = pre.centered_dots[s - 1].dot(multipliers);
    }
    const Vector z = pre.solver.solve(ug);
    return n * ((1.0 / eps) * quad - ((1.0 - eps) / eps) * tc.dot(z));
}

double bootstrap_replicate_wald_amortized(const WaldPrecompute& pre, const Vector& multipliers,
                                          int n) {
    return n * multipliers.dot(pre.replicate_form * multipliers);
}

double quantile(const std::vector<double>& values, double alpha) {
    if (values.empty()) throw DomainError("quantile of empty sample");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
    const auto b = static_cast<double>(values.size());
    auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * b - 1e-9));
    k = std::min(std::max<std::size_t>(k, 1), values.size());
    std::vector<double> sorted(values);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     sorted.end());
    return sorted[k - 1];
}

namespace {

// Covariate view for a possibly misspecified nuisance: the kept columns, or
// a constant surrogate when the subset is empty.
Matrix restricted_covariates(const Matrix& covariates, const std::vector<int>& kept) {
    Matrix out(covariates.rows(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
        if (kept[j] < 0 || kept[j] >= covariates.cols())
            throw DomainError("misspecification subset references a missing covariate column");
        out.col(static_cast<Eigen::Index>(j)) = covariates.col(kept[j]);
    }
    return out;
}

} // namespace

PipelineArtifacts fit_pipeline(const Dataset& data, const TestConfig& config) {
    data.validate();
    const int n = data.n();

    PipelineArtifacts art;
    art.folds = make_folds(n, data.treatment, config.seed);
    art.kernel_x = resolve(config.kernel_x, data.covariates);
    art.kernel_y = resolve(config.kernel_y, data.outcomes);
    art.grams.covariate = gram(data.covariates, art.kernel_x);
    art.grams.outcome = gram(data.outcomes, art.kernel_y);

    if (config.misspecify.propensity &&
        config.propensity.method == PropensityMethod::kLogistic) {
        Dataset reduced = data;
        reduced.covariates = restricted_covariates(data.covariates,
                                                   config.misspecify.kept_covariates);
        art.propensity = fit_propensity(reduced, art.folds, config.propensity, config.seed);
    } else {
        art.propensity = fit_propensity(data, art.folds, config.propensity, config.seed);
    }

    if (config.misspecify.outcome) {
        // The outcome model sees a restricted covariate kernel; the test's
        // Gram matrices stay on the full covariates.
        Matrix reduced = restricted_covariates(data.covariates,
                                               config.misspecify.kept_covariates);
        Matrix nuisance_gram;
        if (reduced.cols() == 0) {
            nuisance_gram = Matrix::Ones(n, n);
        } else {
            KernelSpec spec = resolve(config.kernel_x, reduced);
            nuisance_gram = gram(reduced, spec);
        }
        art.outcome_weights = fit_outcome_weights(data, art.folds, nuisance_gram, config.lambda);
    } else {
        art.outcome_weights = fit_outcome_weights(data, art.folds, art.grams.covariate, config.lambda);
    }

    art.coef.one_step = build_one_step_coefficients(data.treatment, art.folds,
                                                    art.propensity.w, art.outcome_weights);
    art.coef.plug_in = build_plug_in_coefficients(art.folds, art.outcome_weights);
    return art;
}

TestResult skcd_test(const Dataset& data, const TestConfig& config) {
    const int n = data.n();
    const int b = config.bootstrap_samples;
    if (b < 1) throw DomainError("bootstrap sample count must be positive");

    TestResult result;
    result.config = config;
    result.alpha = config.alpha;
    result.bootstrap_samples = b;
    result.seed = config.seed;
    result.n = n;
    if (b < 50)
        result.warnings.push_back("bootstrap sample count below 50; quantile estimate is coarse");
    for (const auto& w : data.warnings) result.warnings.push_back(w);

    PipelineArtifacts art = fit_pipeline(data, config);
    result.config.kernel_x = art.kernel_x;
    result.config.kernel_y = art.kernel_y;

    const Matrix& coef = art.coef.one_step;
    result.bootstrap_values.assign(static_cast<std::size_t>(b), 0.0);

    if (config.stat == StatKind::kMmd) {
        const Matrix mmd_form = art.grams.covariate.cwiseProduct((coef * art.grams.outcome) * coef.transpose());
        result.statistic = mmd_statistic(coef, art.grams.covariate, art.grams.outcome, n);
        parallel_for(b, config.threads, [&](int rep) {
            Rng rng(derive_seed(config.seed, kBootstrapStream, static_cast<std::uint64_t>(rep)));
            const Vector xi = draw_multipliers(art.folds, rng);
            result.bootstrap_values[static_cast<std::size_t>(rep)] =
                bootstrap_replicate_mmd(mmd_form, xi, n);
        });
        result.config.epsilon = config.epsilon;
    } else {
        const WaldPrecompute pre =
            build_wald_precompute(coef, art.coef.plug_in, art.grams.covariate, art.grams.outcome, art.folds,
                                  config.epsilon);
        result.statistic = wald_statistic(pre, coef, art.grams.covariate, art.grams.outcome, n);
        result.config.epsilon = EpsilonRule::fixed(pre.epsilon);
        parallel_for(b, config.threads, [&](int rep) {
            Rng rng(derive_seed(config.seed, kBootstrapStream, static_cast<std::uint64_t>(rep)));
            const Vector xi = draw_multipliers(art.folds, rng);
            result.bootstrap_values[static_cast<std::size_t>(rep)] =
                bootstrap_replicate_wald_amortized(pre, xi, n);
        });
    }

    result.quantile = quantile(result.bootstrap_values, config.alpha);
    result.reject = result.statistic.value > result.quantile;
    int exceed = 0;
    for (double v : result.bootstrap_values)
        if (v >= result.statistic.value) ++exceed;
    result.exceedance = (exceed + 1.0) / (b + 1.0);
    return result;
}

BandResult mmd_slice_band(const Dataset& data, const PipelineArtifacts& artifacts,
                          const Vector& profile_x, const Matrix& y_grid, int bootstrap_samples,
                          double alpha, std::uint64_t seed, int threads) {
    const int n = data.n();
    if (profile_x.size() != data.dim_x())
        throw DomainError("profile dimension does not match covariates");
    if (y_grid.cols() != data.dim_y())
        throw DomainError("grid dimension does not match outcomes");

    const Matrix& coef = artifacts.coef.one_step;
    const Vector k_x = kernel_vector(data.covariates, profile_x, artifacts.kernel_x);
    const Matrix clct = (coef * artifacts.grams.outcome) * coef.transpose();
    const Matrix slice_form = (k_x * k_x.transpose()).cwiseProduct(clct);

    std::vector<double> values(static_cast<std::size_t>(bootstrap_samples), 0.0);
    parallel_for(bootstrap_samples, threads, [&](int rep) {
        Rng rng(derive_seed(seed, kBandStream, static_cast<std::uint64_t>(rep)));
        const Vector xi = draw_multipliers(artifacts.folds, rng);
        values[static_cast<std::size_t>(rep)] = bootstrap_replicate_mmd(slice_form, xi, n);
    });

    BandResult band;
    band.kind = "mmd_slice";
    band.profile_x = profile_x;
    band.y_grid = y_grid;
    band.alpha = alpha;
    band.bootstrap_samples = bootstrap_samples;
    band.seed = seed;
    band.qhat = quantile(values, alpha);
    band.kernel_x_bandwidth = artifacts.kernel_x.bandwidth;
    band.kernel_y_bandwidth = artifacts.kernel_y.bandwidth;
    band.lambda = artifacts.outcome_weights.lambda;

    const auto grid_size = y_grid.rows();
    Matrix l_grid(n, grid_size);
    for (Eigen::Index g = 0; g < grid_size; ++g)
        l_grid.col(g) = kernel_vector(data.outcomes, y_grid.row(g).transpose(),
                                      artifacts.kernel_y);
    band.witness = witness_values(coef, k_x, l_grid);
    band.half_width =
        Vector::Constant(grid_size, std::sqrt(std::max(band.qhat, 0.0) / n));
    return band;
}

double global_band_width(StatKind kind, const Dataset& data, const PipelineArtifacts& artifacts,
                         const Vector& x, const Vector& y, double epsilon, double qhat) {
    const int n = data.n();
    const double self_kernel = 1.0; // Gaussian: k(x,x) l(y,y) = 1
    if (kind == StatKind::kMmd)
        return std::sqrt(self_kernel * std::max(qhat, 0.0) / n);

    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in (0, 1]");
    // Wald width applies the inverse operator exactly:
    //   w^2 = [(1-eps) <Lambda, Sigma Lambda> + eps k(x,x) l(y,y)] qhat / n,
    // with the Sigma term expanded over the per-observation influence
    // evaluations phi_i(x, y).
    const Vector k_x = kernel_vector(data.covariates, x, artifacts.kernel_x);
    const Vector l_y = kernel_vector(data.outcomes, y, artifacts.kernel_y);
    const Vector c_ly = artifacts.coef.one_step * l_y;
    const Vector e_ly = artifacts.coef.plug_in * l_y;

    double sigma_term = 0.0;
    for (int fold : {1, 2}) {
        const double ns = artifacts.folds.size(fold);
        double plug_mean = 0.0; // k_x^T V^s l_y
        for (int i : artifacts.folds.indices(fold)) plug_mean += k_x(i) * e_ly(i);
        plug_mean *= std::sqrt(2.0 / ns);
        double fold_sum = 0.0;
        for (int i : artifacts.folds.indices(fold)) {
            const double phi =
                std::sqrt(2.0 * ns) * (k_x(i) * std::sqrt(2.0 * ns) * c_ly(i) - plug_mean);
            fold_sum += phi * phi;
        }
        sigma_term += 0.5 * fold_sum / ns;
    }
    const double width_sq =
        ((1.0 - epsilon) * sigma_term + epsilon * self_kernel) * std::max(qhat, 0.0) / n;
    return std::sqrt(width_sq);
}

MonteCarloResult monte_carlo_rejection_rate(const DgpConfig& dgp, const TestConfig& test_config,
                                            int replications, std::uint64_t master_seed,
                                            int threads) {
    if (replications < 10) throw DomainError("monte carlo harness needs at least 10 replications");
    std::vector<int> rejected(static_cast<std::size_t>(replications), 0);
    parallel_for(replications, threads, [&](int rep) {
        SimulatedData sim =
            simulate_fig1(dgp.n, dgp.hypothesis, dgp.design,
                          derive_seed(master_seed, kSimulationStream,
                                      static_cast<std::uint64_t>(rep)));
        TestConfig config = test_config;
        config.seed = derive_seed(master_seed, kMonteCarloStream, static_cast<std::uint64_t>(rep));
        config.threads = 1;
        if (config.propensity.method == PropensityMethod::kKnown)
            config.propensity.known = sim.true_propensity;
        const TestResult result = skcd_test(sim.data, config);
        rejected[static_cast<std::size_t>(rep)] = result.reject ? 1 : 0;
    });

    MonteCarloResult out;
    out.replications = replications;
    for (int r : rejected) out.rejections += r;
    out.rate = static_cast<double>(out.rejections) / replications;
    std::tie(out.ci_lo, out.ci_hi) = wilson_interval(out.rejections, replications);
    return out;
}

std::pair<double, double> wilson_interval(int successes, int trials) {
    if (trials <= 0) throw DomainError("wilson interval needs a positive trial count");
    const double z = 1.959963984540054; // 95% normal quantile
    const double nr = trials;
    const double rate = successes / nr;
    const double center = (rate + z * z / (2.0 * nr)) / (1.0 + z * z / nr);
    const double margin = z / (1.0 + z * z / nr) *
                          std::sqrt(rate * (1.0 - rate) / nr + z * z / (4.0 * nr * nr));
    return {std::max(0.0, center - margin), std::min(1.0, center + margin)};
}

} // namespace skcd
