#include "skcd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "skcd/errors.hpp"
#include "skcd/rng.hpp"

namespace skcd {

void Dataset::validate() const {
    const int m = n();
    if (m < 4) throw DomainError("dataset too small: need n >= 4, got " + std::to_string(m));
    if (static_cast<int>(treatment.size()) != m || outcomes.rows() != m)
        throw DomainError("dataset fields have inconsistent row counts");
    if (!covariates.allFinite() || !outcomes.allFinite())
        throw DomainError("dataset contains non-finite entries");
    int treated = 0;
    for (int a : treatment) {
        if (a != 0 && a != 1) throw DomainError("treatment value not in {0,1}");
        treated += a;
    }
    if (treated == 0 || treated == m)
        throw DomainError("treatment must contain at least one 0 and one 1");
}

namespace {

// RFC-4180 record reader: handles quoted fields, escaped quotes and
// embedded newlines. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool saw_any = false;
    int c;
    while ((c = in.get()) != EOF) {
        saw_any = true;
        char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\r') {
            if (in.peek() == '\n') in.get();
            fields.push_back(std::move(field));
            return true;
        } else if (ch == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(ch);
        }
    }
    if (!saw_any) return false;
    fields.push_back(std::move(field));
    return true;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    errno = 0;
    double value = std::strtod(begin, &end);
    while (end && *end == ' ') ++end;
    if (end == begin || (end && *end != '\0'))
        throw ParseError("non-numeric cell at row " + std::to_string(row) + ", column '" +
                         column + "': '" + cell + "'");
    if (!std::isfinite(value))
        throw ParseError("non-finite cell at row " + std::to_string(row) + ", column '" +
                         column + "'");
    return value;
}

std::string format_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void standardize_column(Eigen::Ref<Eigen::VectorXd> col, const std::string& name,
                        std::vector<StandardizationRecord>& records) {
    const auto m = col.size();
    const double mean = col.mean();
    const double ss = (col.array() - mean).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(m - 1));
    if (!(sd > 0.0)) throw DomainError("zero variance column '" + name + "'");
    col = (col.array() - mean) / sd;
    records.push_back({name, mean, sd});
}

} // namespace

Dataset load_csv(const std::string& path, const SchemaConfig& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("file not found: " + path);

    std::vector<std::string> header;
    if (!read_record(in, header)) throw SchemaError("empty file: " + path);
    // Strip a UTF-8 BOM if present.
    if (!header.empty() && header[0].size() >= 3 &&
        static_cast<unsigned char>(header[0][0]) == 0xEF)
        header[0].erase(0, 3);

    std::unordered_map<std::string, int> col_index;
    for (std::size_t i = 0; i < header.size(); ++i)
        col_index.emplace(header[i], static_cast<int>(i));

    auto require = [&](const std::string& name) {
        auto it = col_index.find(name);
        if (it == col_index.end()) throw SchemaError("missing column '" + name + "'");
        return it->second;
    };

    std::unordered_set<std::string> seen;
    auto check_disjoint = [&](const std::string& name) {
        if (!seen.insert(name).second)
            throw SchemaError("column '" + name + "' referenced by more than one role");
    };
    for (const auto& c : schema.covariate_columns) check_disjoint(c);
    check_disjoint(schema.treatment_column);
    for (const auto& c : schema.outcome_columns) check_disjoint(c);

    std::vector<int> x_cols, y_cols;
    for (const auto& c : schema.covariate_columns) x_cols.push_back(require(c));
    const int a_col = require(schema.treatment_column);
    for (const auto& c : schema.outcome_columns) y_cols.push_back(require(c));

    for (const auto& c : schema.standardize) {
        bool known = std::count(schema.covariate_columns.begin(),
                                schema.covariate_columns.end(), c) > 0 ||
                     std::count(schema.outcome_columns.begin(),
                                schema.outcome_columns.end(), c) > 0;
        if (!known)
            throw SchemaError("standardize column '" + c +
                              "' is not a covariate or outcome column");
    }

    std::vector<std::vector<double>> rows;
    std::vector<int> treatment;
    std::vector<std::string> fields;
    std::size_t row_number = 1;
    while (read_record(in, fields)) {
        ++row_number;
        if (fields.size() == 1 && fields[0].empty()) continue; // trailing blank line
        if (fields.size() != header.size())
            throw ParseError("row " + std::to_string(row_number) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(header.size()));
        std::vector<double> row;
        row.reserve(x_cols.size() + y_cols.size());
        for (std::size_t k = 0; k < x_cols.size(); ++k)
            row.push_back(parse_cell(fields[static_cast<std::size_t>(x_cols[k])], row_number,
                                     schema.covariate_columns[k]));
        const double a = parse_cell(fields[static_cast<std::size_t>(a_col)], row_number,
                                    schema.treatment_column);
        if (a != 0.0 && a != 1.0)
            throw DomainError("treatment value not in {0,1} at row " +
                              std::to_string(row_number));
        for (std::size_t k = 0; k < y_cols.size(); ++k)
            row.push_back(parse_cell(fields[static_cast<std::size_t>(y_cols[k])], row_number,
                                     schema.outcome_columns[k]));
        rows.push_back(std::move(row));
        treatment.push_back(static_cast<int>(a));
    }

    const int n = static_cast<int>(rows.size());
    const int dx = static_cast<int>(x_cols.size());
    const int dy = static_cast<int>(y_cols.size());

    Dataset data;
    data.covariates.resize(n, dx);
    data.outcomes.resize(n, dy);
    data.treatment = std::move(treatment);
    data.covariate_names = schema.covariate_columns;
    data.outcome_names = schema.outcome_columns;
    data.treatment_name = schema.treatment_column;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dx; ++j) data.covariates(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        for (int j = 0; j < dy; ++j) data.outcomes(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(dx + j)];
    }

    for (const auto& name : schema.standardize) {
        auto xit = std::find(schema.covariate_columns.begin(),
                             schema.covariate_columns.end(), name);
        if (xit != schema.covariate_columns.end()) {
            auto j = static_cast<int>(xit - schema.covariate_columns.begin());
            standardize_column(data.covariates.col(j), name, data.standardization);
            continue;
        }
        auto yit = std::find(schema.outcome_columns.begin(), schema.outcome_columns.end(), name);
        auto j = static_cast<int>(yit - schema.outcome_columns.begin());
        standardize_column(data.outcomes.col(j), name, data.standardization);
    }

    // Duplicate-row scan. Exact ties make the witness representation
    // ambiguous, so flag them (analysis proceeds regardless).
    {
        std::unordered_set<std::string> keys;
        bool duplicate = false;
        for (int i = 0; i < n && !duplicate; ++i) {
            std::ostringstream key;
            for (int j = 0; j < dx; ++j) key << format_full(data.covariates(i, j)) << ',';
            key << data.treatment[static_cast<std::size_t>(i)] << ',';
            for (int j = 0; j < dy; ++j) key << format_full(data.outcomes(i, j)) << ',';
            duplicate = !keys.insert(key.str()).second;
        }
        if (duplicate)
            data.warnings.push_back("duplicate rows detected; witness coefficients may be "
                                    "non-unique for exact ties");
    }
    return data;
}

void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open for writing: " + path);
    const int n = data.n(), dx = data.dim_x(), dy = data.dim_y();
    auto x_name = [&](int j) {
        return j < static_cast<int>(data.covariate_names.size())
                   ? data.covariate_names[static_cast<std::size_t>(j)]
                   : "x" + std::to_string(j + 1);
    };
    auto y_name = [&](int j) {
        return j < static_cast<int>(data.outcome_names.size())
                   ? data.outcome_names[static_cast<std::size_t>(j)]
                   : "y" + std::to_string(j + 1);
    };
    for (int j = 0; j < dx; ++j) out << x_name(j) << ',';
    out << data.treatment_name;
    for (int j = 0; j < dy; ++j) out << ',' << y_name(j);
    out << '\n';
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dx; ++j) out << format_full(data.covariates(i, j)) << ',';
        out << data.treatment[static_cast<std::size_t>(i)];
        for (int j = 0; j < dy; ++j) out << ',' << format_full(data.outcomes(i, j));
        out << '\n';
    }
}

void FoldAssignment::finalize() {
    members[0].clear();
    members[1].clear();
    positions_.assign(fold_of.size(), -1);
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
        const int f = fold_of[i];
        positions_[i] = static_cast<int>(members[static_cast<std::size_t>(f - 1)].size());
        members[static_cast<std::size_t>(f - 1)].push_back(static_cast<int>(i));
    }
    sizes[0] = static_cast<int>(members[0].size());
    sizes[1] = static_cast<int>(members[1].size());
}

FoldAssignment make_folds(int n, const std::vector<int>& treatment, std::uint64_t seed) {
    if (n < 4) throw DomainError("make_folds requires n >= 4");
    if (static_cast<int>(treatment.size()) != n)
        throw DomainError("treatment length does not match n");

    std::vector<int> arm0, arm1;
    for (int i = 0; i < n; ++i) {
        if (treatment[static_cast<std::size_t>(i)] == 1)
            arm1.push_back(i);
        else if (treatment[static_cast<std::size_t>(i)] == 0)
            arm0.push_back(i);
        else
            throw DomainError("treatment value not in {0,1}");
    }
    if (arm0.size() < 2 || arm1.size() < 2)
        throw DomainError("each treatment arm needs at least 2 members to split");

    Rng rng(derive_seed(seed, kFoldStream, 0));
    FoldAssignment folds;
    folds.fold_of.assign(static_cast<std::size_t>(n), 0);
    // Within each arm: shuffle, then alternate folds starting from a random
    // one, so per-arm fold counts differ by at most one.
    for (auto* arm : {&arm1, &arm0}) {
        rng.shuffle(*arm);
        int fold = rng.bernoulli(0.5) ? 1 : 2;
        for (int idx : *arm) {
            folds.fold_of[static_cast<std::size_t>(idx)] = fold;
            fold = 3 - fold;
        }
    }
    folds.finalize();
    return folds;
}

SimulatedData simulate_fig1(int n, Hypothesis hypothesis, PropensityDesign design,
                            std::uint64_t seed) {
    if (n < 4) throw DomainError("simulate_fig1 requires n >= 4");
    Rng rng(derive_seed(seed, kSimulationStream, 0));

    Vector x(n), y0(n), y1(n);
    for (int i = 0; i < n; ++i) {
        x(i) = rng.uniform(-1.0, 1.0);
        y0(i) = rng.uniform(-1.0, 1.0);
        if (hypothesis == Hypothesis::kNull) {
            y1(i) = rng.uniform(-1.0, 1.0);
        } else if (x(i) > 0.0) {
            y1(i) = rng.uniform(-0.5, 0.5);
        } else {
            // Unif([-1,-.5] u [.5,1]): pick a half, then the offset.
            const double u = rng.uniform(0.0, 0.5);
            y1(i) = rng.bernoulli(0.5) ? (0.5 + u) : (-1.0 + u);
        }
    }

    Vector propensity(n);
    if (design == PropensityDesign::kConstantHalf) {
        propensity.setConstant(0.5);
    } else {
        // Logistic assignment with min-max rescaling into [0.2, 0.8] so that
        // overlap holds strictly over the sample.
        Vector raw(n);
        for (int i = 0; i < n; ++i) {
            const double logit = 2.0 - 1.5 * x(i) * std::tanh(2.0 * x(i));
            raw(i) = 1.0 / (1.0 + std::exp(-logit));
        }
        const double lo = raw.minCoeff(), hi = raw.maxCoeff();
        const double span = hi - lo;
        for (int i = 0; i < n; ++i)
            propensity(i) = span > 0.0 ? 0.2 + 0.6 * (raw(i) - lo) / span : 0.5;
    }

    Dataset data;
    data.covariates = x;
    data.outcomes.resize(n, 1);
    data.treatment.resize(static_cast<std::size_t>(n));
    data.covariate_names = {"x"};
    data.outcome_names = {"y"};
    for (int i = 0; i < n; ++i) {
        const int a = rng.bernoulli(propensity(i)) ? 1 : 0;
        data.treatment[static_cast<std::size_t>(i)] = a;
        data.outcomes(i, 0) = a == 1 ? y1(i) : y0(i);
    }
    return {std::move(data), std::move(propensity)};
}

} // namespace skcd
