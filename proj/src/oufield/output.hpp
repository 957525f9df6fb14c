#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "oufield/inference.hpp"

namespace oufield {

// iter,gamma,alpha,eta,beta,sigma2,logpost (every iteration, burn-in included).
std::string trace_csv(const Trace& trace);
void write_trace_csv(const std::filesystem::path& path, const Trace& trace);
Trace read_trace_csv(const std::filesystem::path& path, int burn_in, double delta, double horizon);

nlohmann::json trace_sidecar(const Trace& trace, std::uint64_t base_seed, const std::string& config_hash);

struct SummaryRow {
  std::string parameter;
  std::string interpretation;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double rhat = 0.0;  // NaN when unavailable
  double ess = 0.0;   // NaN when unavailable
};

// Posterior mean, 95% equal-tailed interval, split-Rhat and ESS per parameter.
// Rhat/ESS are NaN when fewer than 2 chains or 100 post-burn-in samples exist.
std::vector<SummaryRow> summarize_traces(const std::vector<Trace>& traces);
std::string write_summary_table(const std::vector<Trace>& traces);
std::string format_summary_table(const std::vector<SummaryRow>& rows);

}  // namespace oufield
