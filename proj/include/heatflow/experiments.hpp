#pragma once

#include <string>

#include "heatflow/config.hpp"

namespace heatflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertion = 1;
inline constexpr int kExitParse = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one named experiment (transport, map-grid, regularity, verify,
/// score-table, marginal-check, exponent-sweep) against the configured
/// target. Writes resolved-config.txt, the experiment's CSV files, and
/// report.json into output_dir. Returns 0 when every enabled assertion
/// passed and 1 otherwise; configuration and numerical errors propagate as
/// exceptions for the CLI to map onto exit codes 2 and 3.
int run_experiment(const std::string& experiment, ExperimentConfig& cfg,
                   const std::string& output_dir, int threads);

}  // namespace heatflow
