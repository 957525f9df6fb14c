#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oufield/grid.hpp"
#include "oufield/sulfate_model.hpp"

namespace oufield {

// facility_id -> fraction of that facility's SO2 removed.
struct Scenario {
  std::map<std::string, double> reductions;
  std::string label;

  // Rejects fractions outside [0, 1] and ids absent from the inventory.
  static Scenario make(const EmissionsInventory& inventory, std::map<std::string, double> reductions,
                       std::string label = {});
};

// Per-cell removed emissions X*. `committed` fractions already applied to a
// facility shrink the tonnage the scenario acts on (sequential mode).
Eigen::VectorXd apply_scenario(const EmissionsInventory& inventory, const Scenario& scenario,
                               const std::map<std::string, double>& committed = {});

// Posterior draws the forecast resamples from, plus everything needed to
// rebuild the model.
struct ForecastContext {
  std::shared_ptr<const TransportComponents> parts;
  Eigen::VectorXd emissions;  // baseline X (only its length is used for sampling)
  std::vector<Theta> posterior;
};

struct ForecastOptions {
  int n_draws = 2000;
  std::uint64_t seed = 0;
  bool include_noise = true;
  int threads = 1;
};

// n_draws reduction surfaces. Draw k uses an RNG stream derived from
// (seed, k): a theta row drawn with replacement, then one field sample.
std::vector<Eigen::VectorXd> forecast_reduction(const ForecastContext& ctx, const Eigen::VectorXd& x_star,
                                                const ForecastOptions& options);

// Mean reduction field mu(theta, X*) at a fixed theta (no sampling).
Eigen::VectorXd mean_reduction_field(const std::shared_ptr<const TransportComponents>& parts,
                                     const Theta& theta, const Eigen::VectorXd& x_star);

double population_exposure(const Eigen::VectorXd& field, const Eigen::VectorXd& population);

struct ExposureSummary {
  std::string label;
  double mean = 0.0;
  double lo = 0.0;  // 2.5%
  double hi = 0.0;  // 97.5%
  double std_error = 0.0;
  std::vector<double> per_draw;
  int n_draws = 0;
  Eigen::VectorXd mean_field;
};

// Equal-tailed quantile (linear interpolation between order statistics).
double quantile(std::vector<double> values, double q);

ExposureSummary summarize_exposure(const std::vector<Eigen::VectorXd>& fields,
                                   const Eigen::VectorXd& population, std::string label);

// One single-facility scenario per candidate, each sampled with the same
// seed so candidates share random numbers. Sorted by mean, descending; ties by id.
std::vector<ExposureSummary> rank_facilities(const ForecastContext& ctx,
                                             const EmissionsInventory& inventory,
                                             const std::vector<std::string>& candidate_ids,
                                             double fraction, const Eigen::VectorXd& population,
                                             const ForecastOptions& options,
                                             const std::map<std::string, double>& committed = {});

}  // namespace oufield
