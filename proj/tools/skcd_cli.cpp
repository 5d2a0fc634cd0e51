// Command-line front end: run the distributional treatment-effect tests on
// CSV data, emit witness confidence bands, run Monte-Carlo calibration
// studies, and cross-check the closed-form statistics against their dense
// oracles.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "skcd/baseline_kcd.hpp"
#include "skcd/errors.hpp"
#include "skcd/inference.hpp"
#include "skcd/parallel.hpp"
#include "skcd/serialize.hpp"

namespace {

using namespace skcd;

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

void write_output(const std::string& path, const std::string& payload) {
    if (path.empty()) {
        std::cout << payload;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open for writing: " + path);
    out << payload;
}

struct CommonFlags {
    std::string data_path, schema_path, out_path;
    std::string covariates, treatment = "a", outcomes, standardize;
    std::string stat = "mmd";
    std::string propensity = "logistic";
    double lambda = 1e-3;
    double gamma = 1.0 / 3.0;
    double epsilon = 0.0; // 0 means "use gamma heuristic"
    int bootstrap = 1000;
    int permutations = 150;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_data) {
    auto* data = cmd->add_option("--data", f.data_path, "input CSV path");
    if (needs_data) data->required();
    cmd->add_option("--schema", f.schema_path, "schema JSON sidecar");
    cmd->add_option("--covariates", f.covariates, "comma-separated covariate columns");
    cmd->add_option("--treatment", f.treatment, "treatment column name");
    cmd->add_option("--outcomes", f.outcomes, "comma-separated outcome columns");
    cmd->add_option("--standardize", f.standardize, "columns to standardize");
    cmd->add_option("--stat", f.stat, "statistic kind: mmd or wald");
    cmd->add_option("--propensity", f.propensity,
                    "propensity method: logistic, constant, or known:<path>");
    cmd->add_option("--lambda", f.lambda, "outcome ridge parameter");
    cmd->add_option("--gamma", f.gamma, "trust parameter for the epsilon heuristic");
    cmd->add_option("--epsilon", f.epsilon, "fixed Wald regularizer in (0,1]");
    cmd->add_option("--B", f.bootstrap, "bootstrap replicates");
    cmd->add_option("--M", f.permutations, "baseline permutations");
    cmd->add_option("--alpha", f.alpha, "test level");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--threads", f.threads, "worker threads (0 = auto)");
    cmd->add_option("--out", f.out_path, "output path (default: stdout)");
}

SchemaConfig schema_from_flags(const CommonFlags& f) {
    if (!f.schema_path.empty()) {
        std::ifstream in(f.schema_path);
        if (!in) throw FileError("file not found: " + f.schema_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("invalid schema JSON: " + std::string(e.what()));
        }
        SchemaConfig schema;
        schema.covariate_columns = j.at("covariates").get<std::vector<std::string>>();
        schema.treatment_column = j.at("treatment").get<std::string>();
        schema.outcome_columns = j.at("outcomes").get<std::vector<std::string>>();
        if (j.contains("standardize"))
            schema.standardize = j.at("standardize").get<std::vector<std::string>>();
        return schema;
    }
    SchemaConfig schema;
    schema.covariate_columns = split_list(f.covariates);
    schema.treatment_column = f.treatment;
    schema.outcome_columns = split_list(f.outcomes);
    schema.standardize = split_list(f.standardize);
    if (schema.covariate_columns.empty() || schema.outcome_columns.empty())
        throw SchemaError("schema needs covariate and outcome columns "
                          "(--schema or --covariates/--outcomes)");
    return schema;
}

Vector load_propensity_file(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) throw FileError("file not found: " + path);
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        try {
            values.push_back(std::stod(line));
        } catch (const std::exception&) {
            throw ParseError("invalid propensity value: '" + line + "'");
        }
    }
    if (static_cast<int>(values.size()) != n)
        throw DomainError("propensity file has " + std::to_string(values.size()) +
                          " values, dataset has " + std::to_string(n) + " rows");
    Vector w(n);
    for (int i = 0; i < n; ++i) w(i) = values[static_cast<std::size_t>(i)];
    return w;
}

TestConfig config_from_flags(const CommonFlags& f, const Dataset& data) {
    TestConfig config;
    if (f.stat == "mmd")
        config.stat = StatKind::kMmd;
    else if (f.stat == "wald")
        config.stat = StatKind::kWald;
    else
        throw DomainError("unknown statistic kind: " + f.stat);

    if (f.propensity == "logistic") {
        config.propensity.method = PropensityMethod::kLogistic;
    } else if (f.propensity == "constant") {
        config.propensity.method = PropensityMethod::kConstant;
    } else if (f.propensity.rfind("known:", 0) == 0) {
        config.propensity.method = PropensityMethod::kKnown;
        config.propensity.known = load_propensity_file(f.propensity.substr(6), data.n());
    } else {
        throw DomainError("unknown propensity method: " + f.propensity);
    }

    config.lambda = f.lambda;
    config.epsilon = f.epsilon > 0.0 ? EpsilonRule::fixed(f.epsilon)
                                     : EpsilonRule::from_gamma(f.gamma);
    config.bootstrap_samples = f.bootstrap;
    config.alpha = f.alpha;
    config.seed = f.seed;
    config.threads = f.threads;
    return config;
}

struct GridSpec {
    int coordinate = 1; // 1-based outcome coordinate to vary
    double lo = -3.0, hi = 3.0;
    int steps = 100;
};

GridSpec parse_grid(const std::string& spec) {
    GridSpec g;
    if (std::sscanf(spec.c_str(), "%d:%lf:%lf:%d", &g.coordinate, &g.lo, &g.hi, &g.steps) != 4)
        throw DomainError("grid spec must be j:lo:hi:steps, got '" + spec + "'");
    if (g.steps < 2 || g.coordinate < 1) throw DomainError("invalid grid spec: " + spec);
    return g;
}

Matrix build_grid(const GridSpec& g, int dim_y) {
    if (g.coordinate > dim_y)
        throw DomainError("grid coordinate exceeds outcome dimension");
    Matrix grid = Matrix::Zero(g.steps, dim_y);
    for (int i = 0; i < g.steps; ++i)
        grid(i, g.coordinate - 1) = g.lo + (g.hi - g.lo) * i / (g.steps - 1.0);
    return grid;
}

void dump_matrix_csv(const Matrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open for writing: " + path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

int run_test(const CommonFlags& f, const std::string& dump_prefix) {
    const Dataset data = load_csv(f.data_path, schema_from_flags(f));
    for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
    const TestConfig config = config_from_flags(f, data);
    if (!dump_prefix.empty()) {
        // Coefficient dump for external oracle cross-checks.
        const PipelineArtifacts art = fit_pipeline(data, config);
        dump_matrix_csv(art.coef.one_step, dump_prefix + ".C.csv");
        dump_matrix_csv(art.coef.plug_in, dump_prefix + ".E.csv");
    }
    const TestResult result = skcd_test(data, config);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    write_output(f.out_path, to_json(result));
    return 0;
}

int run_band(const CommonFlags& f, int profile_row, const std::string& grid_spec) {
    const Dataset data = load_csv(f.data_path, schema_from_flags(f));
    const TestConfig config = config_from_flags(f, data);
    if (profile_row < 0 || profile_row >= data.n())
        throw DomainError("profile row out of range");
    const PipelineArtifacts artifacts = fit_pipeline(data, config);
    const Matrix grid = build_grid(parse_grid(grid_spec), data.dim_y());
    const Vector profile = data.covariates.row(profile_row).transpose();
    const BandResult band = mmd_slice_band(data, artifacts, profile, grid,
                                           config.bootstrap_samples, config.alpha, config.seed,
                                           config.threads);
    write_output(f.out_path, to_csv(band));
    return 0;
}

int run_kcd(const CommonFlags& f) {
    const Dataset data = load_csv(f.data_path, schema_from_flags(f));
    KcdConfig config;
    config.permutations = f.permutations;
    config.alpha = f.alpha;
    config.lambda = f.lambda;
    config.seed = f.seed;
    config.threads = f.threads;
    const KcdResult result = kcd_permutation_test(data, config);
    write_output(f.out_path, to_json(result));
    return 0;
}

struct SimulateFlags {
    std::string sizes = "500";
    std::string regimes = "null";
    std::string methods = "mmd";
    int replications = 200;
    std::string emit_data, emit_propensity;
    std::string hypothesis = "null";
    std::string dgp_propensity = "constant";
    std::string misspecify = "none";
    std::string nuisance_covariates;
    int n_single = 500;
};

Hypothesis parse_hypothesis(const std::string& name) {
    if (name == "null") return Hypothesis::kNull;
    if (name == "alternative") return Hypothesis::kAlternative;
    throw DomainError("unknown regime: " + name);
}

int run_simulate(const CommonFlags& f, const SimulateFlags& s) {
    const PropensityDesign design = s.dgp_propensity == "logistic"
                                        ? PropensityDesign::kLogistic
                                        : PropensityDesign::kConstantHalf;
    if (!s.emit_data.empty()) {
        const SimulatedData sim =
            simulate_fig1(s.n_single, parse_hypothesis(s.hypothesis), design, f.seed);
        write_csv(sim.data, s.emit_data);
        if (!s.emit_propensity.empty()) {
            std::ofstream out(s.emit_propensity);
            if (!out) throw FileError("cannot open for writing: " + s.emit_propensity);
            for (int i = 0; i < sim.data.n(); ++i)
                out << format_double(sim.true_propensity(i)) << '\n';
        }
        return 0;
    }

    MisspecifyConfig misspecify;
    if (s.misspecify == "propensity" || s.misspecify == "both") misspecify.propensity = true;
    if (s.misspecify == "outcome" || s.misspecify == "both") misspecify.outcome = true;
    if (s.misspecify != "none" && s.misspecify != "propensity" && s.misspecify != "outcome" &&
        s.misspecify != "both")
        throw DomainError("unknown misspecification mode: " + s.misspecify);
    for (const auto& idx : split_list(s.nuisance_covariates))
        misspecify.kept_covariates.push_back(std::stoi(idx));

    std::ostringstream table;
    table << "# seed=" << f.seed << " R=" << s.replications << " B=" << f.bootstrap
          << " M=" << f.permutations << " alpha=" << format_double(f.alpha)
          << " propensity=" << f.propensity << " dgp_propensity=" << s.dgp_propensity
          << " misspecify=" << s.misspecify << '\n';
    table << "n,regime,method,rate,ci_lo,ci_hi\n";

    for (const auto& size_str : split_list(s.sizes)) {
        const int n = std::stoi(size_str);
        for (const auto& regime : split_list(s.regimes)) {
            DgpConfig dgp;
            dgp.n = n;
            dgp.hypothesis = parse_hypothesis(regime);
            dgp.design = design;
            for (const auto& method : split_list(s.methods)) {
                MonteCarloResult mc;
                if (method == "kcd") {
                    // Permutation baseline over the same simulations.
                    std::vector<int> rejected(static_cast<std::size_t>(s.replications), 0);
                    parallel_for(s.replications, f.threads, [&](int rep) {
                        SimulatedData sim = simulate_fig1(
                            dgp.n, dgp.hypothesis, dgp.design,
                            derive_seed(f.seed, kSimulationStream,
                                        static_cast<std::uint64_t>(rep)));
                        KcdConfig kcd;
                        kcd.permutations = f.permutations;
                        kcd.alpha = f.alpha;
                        kcd.lambda = f.lambda;
                        kcd.seed = derive_seed(f.seed, kMonteCarloStream,
                                               static_cast<std::uint64_t>(rep));
                        kcd.threads = 1;
                        rejected[static_cast<std::size_t>(rep)] =
                            kcd_permutation_test(sim.data, kcd).reject ? 1 : 0;
                    });
                    mc.replications = s.replications;
                    for (int r : rejected) mc.rejections += r;
                    mc.rate = static_cast<double>(mc.rejections) / s.replications;
                    std::tie(mc.ci_lo, mc.ci_hi) = wilson_interval(mc.rejections, s.replications);
                } else {
                    TestConfig config;
                    config.stat = method == "wald" ? StatKind::kWald : StatKind::kMmd;
                    if (method != "mmd" && method != "wald")
                        throw DomainError("unknown method: " + method);
                    if (f.propensity == "known")
                        config.propensity.method = PropensityMethod::kKnown;
                    else if (f.propensity == "constant")
                        config.propensity.method = PropensityMethod::kConstant;
                    else
                        config.propensity.method = PropensityMethod::kLogistic;
                    config.lambda = f.lambda;
                    config.epsilon = f.epsilon > 0.0 ? EpsilonRule::fixed(f.epsilon)
                                                     : EpsilonRule::from_gamma(f.gamma);
                    config.bootstrap_samples = f.bootstrap;
                    config.alpha = f.alpha;
                    config.misspecify = misspecify;
                    mc = monte_carlo_rejection_rate(dgp, config, s.replications, f.seed,
                                                    f.threads);
                }
                table << n << ',' << regime << ',' << method << ','
                      << format_double(mc.rate) << ',' << format_double(mc.ci_lo) << ','
                      << format_double(mc.ci_hi) << '\n';
            }
        }
    }
    write_output(f.out_path, table.str());
    return 0;
}

// Dense-oracle comparison over pipeline-realistic small instances.
int run_oracle_check() {
    double max_rel = 0.0;
    auto track = [&](double closed, double oracle) {
        const double rel = std::abs(closed - oracle) / (1.0 + std::abs(oracle));
        max_rel = std::max(max_rel, rel);
    };

    int checked = 0;
    for (std::uint64_t seed = 1; checked < 12; ++seed) {
        const int n = 6 + static_cast<int>(seed % 5);
        SimulatedData sim;
        try {
            sim = simulate_fig1(n, Hypothesis::kAlternative, PropensityDesign::kConstantHalf,
                                seed);
            int treated = 0;
            for (int a : sim.data.treatment) treated += a;
            if (treated < 2 || n - treated < 2) continue;
        } catch (const Error&) {
            continue;
        }
        TestConfig config;
        config.propensity.method = PropensityMethod::kKnown;
        config.propensity.known = sim.true_propensity;
        config.seed = seed;
        const PipelineArtifacts art = fit_pipeline(sim.data, config);
        const Matrix& c = art.coef.one_step;
        const Matrix& e = art.coef.plug_in;

        track(mmd_statistic(c, art.grams.covariate, art.grams.outcome, n).value,
              brute_force_statistic(c, e, art.grams.covariate, art.grams.outcome, art.folds, std::nullopt));

        for (double eps : {0.1, 0.5, 1.0}) {
            const WaldPrecompute pre =
                build_wald_precompute(c, e, art.grams.covariate, art.grams.outcome, art.folds, eps);
            track(wald_statistic(pre, c, art.grams.covariate, art.grams.outcome, n).value,
                  brute_force_statistic(c, e, art.grams.covariate, art.grams.outcome, art.folds, eps));

            const dense::Stacked stacked =
                dense::stack_blocks(c, e, art.grams.covariate, art.grams.outcome, art.folds);
            const Matrix dense_cov = stacked.u.transpose() * stacked.t;
            track((pre.cov_block - dense_cov).cwiseAbs().maxCoeff(), 0.0);

            Rng rng(derive_seed(seed, kBootstrapStream, 7));
            const Vector xi = draw_multipliers(art.folds, rng);
            const Matrix reweighted = xi.asDiagonal() * c;
            track(bootstrap_replicate_mmd(pre.mmd_form, xi, n),
                  n * squared_rkhs_norm(reweighted, art.grams.covariate, art.grams.outcome));
            const Vector c_b = dense::vec_row_major(reweighted);
            const Matrix g = dense::kronecker(art.grams.covariate, art.grams.outcome);
            Matrix a_mat = (1.0 - eps) * (stacked.t * stacked.u.transpose());
            a_mat.diagonal().array() += eps;
            const double oracle_wald = n * c_b.dot(a_mat.partialPivLu().solve(g * c_b));
            track(bootstrap_replicate_wald(pre, xi, n), oracle_wald);
            track(bootstrap_replicate_wald_amortized(pre, xi, n), oracle_wald);
        }
        ++checked;
    }

    std::printf("oracle-check: %d instances, max relative error %.3e\n", checked, max_rel);
    return max_rel < 1e-8 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Doubly robust distributional treatment-effect tests"};
    app.require_subcommand(1);

    CommonFlags flags;
    int profile_row = 0;
    std::string grid_spec = "1:-3:3:100";
    SimulateFlags sim_flags;

    std::string dump_prefix;
    auto* cmd_test = app.add_subcommand("test", "run the bootstrap test on CSV data");
    add_common(cmd_test, flags, true);
    cmd_test->add_option("--dump-coef", dump_prefix,
                         "write the coefficient matrices to <prefix>.C.csv / <prefix>.E.csv");

    auto* cmd_band = app.add_subcommand("band", "uniform-in-y witness band at a profile");
    add_common(cmd_band, flags, true);
    cmd_band->add_option("--profile-row", profile_row, "row index of the covariate profile");
    cmd_band->add_option("--grid", grid_spec, "outcome grid spec j:lo:hi:steps");

    auto* cmd_simulate = app.add_subcommand("simulate", "synthetic calibration studies");
    add_common(cmd_simulate, flags, false);
    cmd_simulate->add_option("--n", sim_flags.sizes, "comma-separated sample sizes");
    cmd_simulate->add_option("--regimes", sim_flags.regimes, "null,alternative");
    cmd_simulate->add_option("--methods", sim_flags.methods, "mmd,wald,kcd");
    cmd_simulate->add_option("--R", sim_flags.replications, "Monte-Carlo replications");
    cmd_simulate->add_option("--emit-data", sim_flags.emit_data,
                             "write one simulated dataset CSV and exit");
    cmd_simulate->add_option("--emit-propensity", sim_flags.emit_propensity,
                             "write the true propensities next to --emit-data");
    cmd_simulate->add_option("--hypothesis", sim_flags.hypothesis,
                             "regime for --emit-data: null or alternative");
    cmd_simulate->add_option("--n-single", sim_flags.n_single, "sample size for --emit-data");
    cmd_simulate->add_option("--dgp-propensity", sim_flags.dgp_propensity,
                             "treatment assignment: constant or logistic");
    cmd_simulate->add_option("--misspecify", sim_flags.misspecify,
                             "none, propensity, outcome, or both");
    cmd_simulate->add_option("--nuisance-covariates", sim_flags.nuisance_covariates,
                             "covariate indices kept by misspecified nuisances");

    auto* cmd_kcd = app.add_subcommand("kcd", "permutation-test baseline");
    add_common(cmd_kcd, flags, true);

    app.add_subcommand("oracle-check", "compare closed forms against dense oracles");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (cmd_test->parsed()) return run_test(flags, dump_prefix);
        if (cmd_band->parsed()) return run_band(flags, profile_row, grid_spec);
        if (cmd_simulate->parsed()) return run_simulate(flags, sim_flags);
        if (cmd_kcd->parsed()) return run_kcd(flags);
        return run_oracle_check();
    } catch (const FileError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        // flag values that fail numeric parsing (std::stoi and friends)
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
