#include "oufield/forecast.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <boost/random/uniform_int_distribution.hpp>

#include "oufield/error.hpp"
#include "oufield/rng.hpp"

namespace oufield {

Scenario Scenario::make(const EmissionsInventory& inventory, std::map<std::string, double> reductions,
                        std::string label) {
  for (const auto& [id, f] : reductions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw DomainError("scenario: fraction for '" + id + "' must be in [0, 1]");
    }
    if (!inventory.find(id)) throw DomainError("scenario: unknown facility id '" + id + "'");
  }
  return Scenario{std::move(reductions), std::move(label)};
}

Eigen::VectorXd apply_scenario(const EmissionsInventory& inventory, const Scenario& scenario,
                               const std::map<std::string, double>& committed) {
  Eigen::VectorXd x_star = Eigen::VectorXd::Zero(inventory.X.size());
  for (const auto& [id, fraction] : scenario.reductions) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
      throw DomainError("scenario: fraction for '" + id + "' must be in [0, 1]");
    }
    bool found = false;
    for (std::size_t i = 0; i < inventory.facilities.size(); ++i) {
      const auto& f = inventory.facilities[i];
      if (f.id != id) continue;
      found = true;
      const auto cell = inventory.cell_of[i];
      if (!cell) continue;
      double remaining = 1.0;
      if (auto it = committed.find(id); it != committed.end()) {
        if (!(it->second >= 0.0 && it->second <= 1.0)) {
          throw DomainError("scenario: committed fraction for '" + id + "' must be in [0, 1]");
        }
        remaining = 1.0 - it->second;
      }
      x_star[static_cast<Eigen::Index>(*cell)] += fraction * remaining * f.so2_tons;
    }
    if (!found) throw DomainError("scenario: unknown facility id '" + id + "'");
  }
  return x_star;
}

std::vector<Eigen::VectorXd> forecast_reduction(const ForecastContext& ctx, const Eigen::VectorXd& x_star,
                                                const ForecastOptions& options) {
  if (ctx.posterior.empty()) throw DomainError("forecast: posterior trace is empty");
  if (options.n_draws < 1) throw DomainError("forecast: n_draws must be >= 1");
  if (!ctx.parts) throw DomainError("forecast: missing transport components");
  if (static_cast<std::size_t>(x_star.size()) != ctx.parts->diffusion.n()) {
    throw DataError("forecast: X* has the wrong length");
  }
  const int n = options.n_draws;
  // Nothing removed means no reduction at all, noise included.
  if (x_star.cwiseAbs().maxCoeff() == 0.0) {
    return std::vector<Eigen::VectorXd>(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(x_star.size()));
  }
  std::vector<Eigen::VectorXd> fields(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(1, options.threads)));

  auto worker = [&](int w) {
    try {
      SulfateModel model(ctx.parts, Eigen::VectorXd::Zero(x_star.size()), ctx.posterior.front());
      boost::random::uniform_int_distribution<std::size_t> pick(0, ctx.posterior.size() - 1);
      for (int k = next++; k < n; k = next++) {
        Rng rng = make_rng(options.seed, static_cast<std::uint64_t>(k));
        model.set_theta(ctx.posterior[pick(rng)]);
        fields[static_cast<std::size_t>(k)] = model.sample_field_for(x_star, rng, options.include_noise);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  const int workers = std::clamp(options.threads, 1, n);
  if (workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return fields;
}

Eigen::VectorXd mean_reduction_field(const std::shared_ptr<const TransportComponents>& parts,
                                     const Theta& theta, const Eigen::VectorXd& x_star) {
  SulfateModel model(parts, Eigen::VectorXd::Zero(x_star.size()), theta);
  return model.so4_mean_for(x_star);
}

double population_exposure(const Eigen::VectorXd& field, const Eigen::VectorXd& population) {
  if (field.size() != population.size()) throw DataError("exposure: field and population lengths differ");
  const double total = population.sum();
  if (!(total > 0.0)) throw DataError("exposure: population weights are all zero");
  return population.dot(field) / total;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

ExposureSummary summarize_exposure(const std::vector<Eigen::VectorXd>& fields,
                                   const Eigen::VectorXd& population, std::string label) {
  if (fields.empty()) throw DomainError("exposure: no draws");
  ExposureSummary s;
  s.label = std::move(label);
  s.n_draws = static_cast<int>(fields.size());
  s.mean_field = Eigen::VectorXd::Zero(fields.front().size());
  for (const auto& f : fields) {
    s.mean_field += f;
    s.per_draw.push_back(population_exposure(f, population));
  }
  s.mean_field /= static_cast<double>(fields.size());
  double sum = 0.0;
  for (double e : s.per_draw) sum += e;
  s.mean = sum / s.n_draws;
  double ss = 0.0;
  for (double e : s.per_draw) ss += (e - s.mean) * (e - s.mean);
  s.std_error = s.n_draws > 1 ? std::sqrt(ss / (s.n_draws - 1) / s.n_draws) : 0.0;
  s.lo = quantile(s.per_draw, 0.025);
  s.hi = quantile(s.per_draw, 0.975);
  return s;
}

std::vector<ExposureSummary> rank_facilities(const ForecastContext& ctx,
                                             const EmissionsInventory& inventory,
                                             const std::vector<std::string>& candidate_ids,
                                             double fraction, const Eigen::VectorXd& population,
                                             const ForecastOptions& options,
                                             const std::map<std::string, double>& committed) {
  if (candidate_ids.empty()) throw DomainError("rank: candidate list is empty");
  std::vector<ExposureSummary> out;
  for (const auto& id : candidate_ids) {
    const Scenario sc = Scenario::make(inventory, {{id, fraction}}, id);
    const Eigen::VectorXd x_star = apply_scenario(inventory, sc, committed);
    out.push_back(summarize_exposure(forecast_reduction(ctx, x_star, options), population, id));
  }
  std::sort(out.begin(), out.end(), [](const ExposureSummary& a, const ExposureSummary& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.label < b.label;
  });
  return out;
}

}  // namespace oufield
