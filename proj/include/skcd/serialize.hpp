#pragma once

#include <string>

#include "skcd/baseline_kcd.hpp"
#include "skcd/inference.hpp"

namespace skcd {

/// Canonical JSON payload for a test result:
/// {statistic: {kind, value, epsilon?}, quantile, alpha, B, reject,
///  exceedance, seed, n, config}. Deterministic key order and number
/// formatting, so identical configs reproduce identical bytes.
std::string to_json(const TestResult& result);

/// Same envelope with kind "kcd" and M in place of B.
std::string to_json(const KcdResult& result);

/// Plot-ready CSV: one row per grid point with columns
/// y_1..y_{d_y}, witness, lower, upper. Leading '#' lines carry the
/// resolved configuration.
std::string to_csv(const BandResult& band);

std::string format_double(double v); // full-precision %.17g

} // namespace skcd
