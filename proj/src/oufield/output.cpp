#include "oufield/output.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "oufield/error.hpp"
#include "oufield/forecast.hpp"
#include "oufield/io.hpp"

namespace oufield {

namespace {

constexpr std::array<const char*, kNumParams> kInterpretation = {
    "rate of sub-annual wind transport", "rate of annual wind transport", "SO2 -> SO4 reaction rate",
    "proportional rate of SO2 emission", "process variance"};

std::string fmt_fixed(double x) {
  if (std::isnan(x)) return "NA";
  char buf[64];
  const double ax = std::abs(x);
  if (ax != 0.0 && (ax >= 1e6 || ax < 1e-3)) std::snprintf(buf, sizeof buf, "%.4g", x);
  else if (ax >= 100.0) std::snprintf(buf, sizeof buf, "%.0f", x);
  else std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

}  // namespace

std::string trace_csv(const Trace& trace) {
  std::ostringstream out;
  out << "iter,gamma,alpha,eta,beta,sigma2,logpost\n";
  for (int i = 0; i < trace.iterations(); ++i) {
    out << i;
    for (int p = 0; p < kNumParams; ++p) out << ',' << format_double(trace.samples(i, p));
    out << ',' << format_double(trace.log_post[i]) << '\n';
  }
  return out.str();
}

void write_trace_csv(const std::filesystem::path& path, const Trace& trace) {
  write_text_file(path, trace_csv(trace));
}

Trace read_trace_csv(const std::filesystem::path& path, int burn_in, double delta, double horizon) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "iter,gamma,alpha,eta,beta,sigma2,logpost") {
    throw DataError("trace: unexpected header in " + path.string());
  }
  std::vector<std::array<double, kNumParams + 1>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    std::array<double, kNumParams + 1> r{};
    for (auto& v : r) {
      if (!std::getline(ls, cell, ',')) throw DataError("trace: short row in " + path.string());
      v = std::stod(cell);
    }
    rows.push_back(r);
  }
  Trace t;
  t.burn_in = burn_in;
  t.delta = delta;
  t.T = horizon;
  t.samples.resize(static_cast<Eigen::Index>(rows.size()), kNumParams);
  t.log_post.resize(static_cast<Eigen::Index>(rows.size()));
  t.log_lik = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(rows.size()),
                                        std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int p = 0; p < kNumParams; ++p) t.samples(static_cast<Eigen::Index>(i), p) = rows[i][p];
    t.log_post[static_cast<Eigen::Index>(i)] = rows[i][kNumParams];
  }
  return t;
}

nlohmann::json trace_sidecar(const Trace& trace, std::uint64_t base_seed, const std::string& config_hash) {
  nlohmann::json j;
  j["chain"] = trace.chain_id;
  j["seed"] = base_seed;
  j["config_hash"] = config_hash;
  j["iterations"] = trace.iterations();
  j["burn_in"] = trace.burn_in;
  nlohmann::json acc, acc_burn, steps;
  for (int p = 0; p < kNumParams; ++p) {
    acc[kParamNames[p]] = trace.acceptance[p];
    acc_burn[kParamNames[p]] = trace.acceptance_burn_in[p];
    if (trace.iterations() > 0) steps[kParamNames[p]] = trace.step_sizes(trace.iterations() - 1, p);
  }
  j["acceptance"] = acc;
  j["acceptance_burn_in"] = acc_burn;
  j["frozen_step_sizes"] = steps;
  return j;
}

std::vector<SummaryRow> summarize_traces(const std::vector<Trace>& traces) {
  if (traces.empty()) throw DiagnosticsError("summary: no traces");
  const Eigen::MatrixXd pooled = pooled_samples(traces);
  if (pooled.rows() == 0) throw DiagnosticsError("summary: no post-burn-in samples");
  std::optional<Diagnostics> diag;
  try {
    diag = diagnostics(traces);
  } catch (const DiagnosticsError&) {
  }
  std::vector<SummaryRow> rows;
  for (int p = 0; p < kNumParams; ++p) {
    SummaryRow r;
    r.parameter = kParamNames[p];
    r.interpretation = kInterpretation[p];
    const double x0 = pooled(0, p);
    r.mean = x0 + (pooled.col(p).array() - x0).sum() / static_cast<double>(pooled.rows());
    std::vector<double> col(pooled.col(p).data(), pooled.col(p).data() + pooled.rows());
    r.lo = quantile(col, 0.025);
    r.hi = quantile(col, 0.975);
    r.rhat = diag ? diag->rhat[p] : std::numeric_limits<double>::quiet_NaN();
    r.ess = diag ? diag->ess[p] : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(r);
  }
  return rows;
}

std::string format_summary_table(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %-36s %12s %26s %8s %10s\n", "Parameter", "Interpretation", "mean",
                "95% CI", "Rhat", "ESS");
  out << line;
  for (const auto& r : rows) {
    const std::string ci = "(" + fmt_fixed(r.lo) + ", " + fmt_fixed(r.hi) + ")";
    char rhat[32];
    if (std::isnan(r.rhat)) std::snprintf(rhat, sizeof rhat, "NA");
    else std::snprintf(rhat, sizeof rhat, "%.3f", r.rhat);
    char ess[32];
    if (std::isnan(r.ess)) std::snprintf(ess, sizeof ess, "NA");
    else std::snprintf(ess, sizeof ess, "%.0f", r.ess);
    std::snprintf(line, sizeof line, "%-10s %-36s %12s %26s %8s %10s\n", r.parameter.c_str(),
                  r.interpretation.c_str(), fmt_fixed(r.mean).c_str(), ci.c_str(), rhat, ess);
    out << line;
  }
  return out.str();
}

std::string write_summary_table(const std::vector<Trace>& traces) {
  return format_summary_table(summarize_traces(traces));
}

}  // namespace oufield
