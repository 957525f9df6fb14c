#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "oufield/config.hpp"

namespace oufield {

struct RunOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;  // overrides the config seed
  int threads = 1;
  std::optional<std::filesystem::path> bundle;  // default: <out_dir>/bundle.json
};

// Operator conservation, M-matrix pattern and spectrum at the reference
// parameter point. Throws NumericalError if the column-sum defect exceeds
// 1e-10 * ||gamma D + alpha C||_inf.
std::string run_check(const RunConfig& cfg, const RunOptions& opts);

// MCMC fit. Writes chain_<c>.csv and chain_<c>.json per chain, summary.txt,
// fit.json and bundle.json into out_dir; returns the summary table.
std::string run_fit(const RunConfig& cfg, const RunOptions& opts);

// Scenario forecast from the bundle; writes forecast.json and returns it.
std::string run_forecast(const RunConfig& cfg, const RunOptions& opts);

// Euler-Maruyama runs of the coupled model; writes simulate_fields.csv,
// simulate_path.csv and simulate.json.
std::string run_simulate(const RunConfig& cfg, const RunOptions& opts);

// Oracle and invariant suite on a small grid (the config's, when given).
// Throws NumericalError listing failures.
std::string run_validate(const std::optional<RunConfig>& cfg, const RunOptions& opts);

// Reference parameter point used by check and as the simulate default.
Theta reference_theta(double delta, double horizon);

}  // namespace oufield
