#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace skcd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Shift/scale parameters recorded for every standardized column.
struct StandardizationRecord {
    std::string column;
    double mean = 0.0;
    double stddev = 1.0;
};

/// Observational sample: covariates (n x d_x), binary treatment (length n),
/// outcomes (n x d_y). Immutable after construction by convention.
struct Dataset {
    Matrix covariates;
    std::vector<int> treatment;
    Matrix outcomes;

    std::vector<std::string> covariate_names;
    std::vector<std::string> outcome_names;
    std::string treatment_name = "a";
    std::vector<StandardizationRecord> standardization;
    std::vector<std::string> warnings;

    int n() const { return static_cast<int>(covariates.rows()); }
    int dim_x() const { return static_cast<int>(covariates.cols()); }
    int dim_y() const { return static_cast<int>(outcomes.cols()); }

    /// Enforces the structural invariants: finite entries, both treatment
    /// arms present, n >= 4. Throws DomainError on violation.
    void validate() const;
};

/// Column roles for CSV ingestion. Column sets must be disjoint; names in
/// `standardize` must appear among the covariate or outcome columns.
struct SchemaConfig {
    std::vector<std::string> covariate_columns;
    std::string treatment_column;
    std::vector<std::string> outcome_columns;
    std::vector<std::string> standardize;
};

/// Reads an RFC-4180 CSV (header row mandatory) and assembles a Dataset.
/// Columns listed in schema.standardize are shifted/scaled to mean 0 and
/// sample standard deviation 1 (n-1 divisor); the parameters are recorded
/// in Dataset::standardization. Duplicated rows are permitted but flagged
/// in Dataset::warnings.
Dataset load_csv(const std::string& path, const SchemaConfig& schema);

/// Writes the dataset with full precision so that reloading it (without
/// standardization) reproduces the values bit-exactly.
void write_csv(const Dataset& data, const std::string& path);

/// Two-way partition of {0..n-1} for cross-fitting. Folds are numbered 1
/// and 2; fold_of[i] gives the fold of observation i and the complement is
/// 3 - fold_of[i].
struct FoldAssignment {
    std::vector<int> fold_of;
    std::array<int, 2> sizes{0, 0};
    std::array<std::vector<int>, 2> members; // sorted global indices per fold

    int n() const { return static_cast<int>(fold_of.size()); }
    int size(int fold) const { return sizes[static_cast<std::size_t>(fold - 1)]; }
    const std::vector<int>& indices(int fold) const {
        return members[static_cast<std::size_t>(fold - 1)];
    }
    /// Position of observation i within its own fold's index list.
    int position_in_fold(int i) const { return positions_[static_cast<std::size_t>(i)]; }

    std::vector<int> positions_; // filled by make_folds / finalize()
    void finalize();             // recompute members/sizes/positions from fold_of
};

/// Random half-split stratified by treatment arm: each arm is divided as
/// evenly as possible between the folds, so both folds contain at least one
/// treated and one control observation. Deterministic given the seed.
FoldAssignment make_folds(int n, const std::vector<int>& treatment, std::uint64_t seed);

enum class Hypothesis { kNull, kAlternative };
enum class PropensityDesign { kConstantHalf, kLogistic };

struct SimulatedData {
    Dataset data;
    Vector true_propensity;
};

/// Synthetic one-dimensional benchmark: X, Y(0) ~ Unif[-1,1] independently.
/// Under the alternative, Y(1)|X is Unif[-.5,.5] when X > 0 and
/// Unif([-1,-.5] u [.5,1]) when X < 0 (so the conditional mean effect is
/// null while the conditional distributions differ). Under the null, Y(1)
/// has the same law as Y(0). Treatment is drawn from the selected
/// propensity design; the true propensities are returned for
/// known-propensity testing.
SimulatedData simulate_fig1(int n, Hypothesis hypothesis, PropensityDesign design,
                            std::uint64_t seed);

} // namespace skcd
