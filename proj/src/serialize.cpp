#include "skcd/serialize.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace skcd {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

const char* kind_name(StatKind kind) {
    return kind == StatKind::kMmd ? "mmd" : "wald";
}

const char* method_name(PropensityMethod method) {
    switch (method) {
        case PropensityMethod::kKnown: return "known";
        case PropensityMethod::kLogistic: return "logistic";
        case PropensityMethod::kConstant: return "constant";
    }
    return "unknown";
}

ordered_json config_json(const TestConfig& config) {
    ordered_json c;
    c["stat"] = kind_name(config.stat);
    c["kernel_x_bandwidth"] = config.kernel_x.bandwidth;
    c["kernel_y_bandwidth"] = config.kernel_y.bandwidth;
    c["propensity"] = method_name(config.propensity.method);
    c["propensity_clip"] = {config.propensity.clip_lo, config.propensity.clip_hi};
    if (config.propensity.method == PropensityMethod::kLogistic)
        c["propensity_l2_penalty"] = config.propensity.l2_penalty;
    c["lambda"] = config.lambda;
    if (config.stat == StatKind::kWald) {
        if (config.epsilon.is_fixed)
            c["epsilon"] = config.epsilon.value;
        else
            c["gamma"] = config.epsilon.gamma;
    }
    c["alpha"] = config.alpha;
    c["B"] = config.bootstrap_samples;
    c["seed"] = config.seed;
    if (config.misspecify.propensity || config.misspecify.outcome) {
        ordered_json m;
        m["propensity"] = config.misspecify.propensity;
        m["outcome"] = config.misspecify.outcome;
        m["kept_covariates"] = config.misspecify.kept_covariates;
        c["misspecify"] = m;
    }
    return c;
}

} // namespace

std::string to_json(const TestResult& result) {
    ordered_json j;
    ordered_json stat;
    stat["kind"] = kind_name(result.statistic.kind);
    stat["value"] = result.statistic.value;
    if (result.statistic.epsilon) stat["epsilon"] = *result.statistic.epsilon;
    j["statistic"] = stat;
    j["quantile"] = result.quantile;
    j["alpha"] = result.alpha;
    j["B"] = result.bootstrap_samples;
    j["reject"] = result.reject;
    j["exceedance"] = result.exceedance;
    j["seed"] = result.seed;
    j["n"] = result.n;
    j["config"] = config_json(result.config);
    return j.dump(2) + "\n";
}

std::string to_json(const KcdResult& result) {
    ordered_json j;
    ordered_json stat;
    stat["kind"] = "kcd";
    stat["value"] = result.statistic;
    j["statistic"] = stat;
    j["quantile"] = result.quantile;
    j["alpha"] = result.alpha;
    j["M"] = result.permutations;
    j["reject"] = result.reject;
    j["exceedance"] = result.exceedance;
    j["seed"] = result.seed;
    j["n"] = result.n;
    return j.dump(2) + "\n";
}

std::string to_csv(const BandResult& band) {
    std::ostringstream out;
    out << "# kind=" << band.kind << " alpha=" << format_double(band.alpha)
        << " B=" << band.bootstrap_samples << " seed=" << band.seed
        << " qhat=" << format_double(band.qhat)
        << " kernel_x_bandwidth=" << format_double(band.kernel_x_bandwidth)
        << " kernel_y_bandwidth=" << format_double(band.kernel_y_bandwidth)
        << " lambda=" << format_double(band.lambda) << "\n# profile_x=";
    for (Eigen::Index j = 0; j < band.profile_x.size(); ++j) {
        if (j) out << ';';
        out << format_double(band.profile_x(j));
    }
    out << '\n';
    const auto dy = band.y_grid.cols();
    for (Eigen::Index j = 0; j < dy; ++j) out << 'y' << '_' << (j + 1) << ',';
    out << "witness,lower,upper\n";
    for (Eigen::Index g = 0; g < band.y_grid.rows(); ++g) {
        for (Eigen::Index j = 0; j < dy; ++j) out << format_double(band.y_grid(g, j)) << ',';
        const double w = band.witness(g), h = band.half_width(g);
        out << format_double(w) << ',' << format_double(w - h) << ',' << format_double(w + h)
            << '\n';
    }
    return out.str();
}

} // namespace skcd
