#include "oufield/config.hpp"

#include <cstdio>
#include <set>

#include "oufield/error.hpp"

namespace oufield {

using nlohmann::json;

namespace {

const json* member(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("config: unknown field '" + (where.empty() ? "" : where + ".") + it.key() + "'");
    }
  }
}

const json& object_at(const json& obj, const char* key, const std::string& where, bool required) {
  static const json empty = json::object();
  const json* m = member(obj, key);
  if (!m) {
    if (required) throw ConfigError("config: missing field '" + where + key + "'");
    return empty;
  }
  if (!m->is_object()) throw ConfigError("config: field '" + where + key + "' must be an object");
  return *m;
}

double number(const json& obj, const char* key, const std::string& where, std::optional<double> fallback) {
  const json* m = member(obj, key);
  if (!m) {
    if (!fallback) throw ConfigError("config: missing field '" + where + key + "'");
    return *fallback;
  }
  if (!m->is_number()) throw ConfigError("config: field '" + where + key + "' must be a number");
  return m->get<double>();
}

long long integer(const json& obj, const char* key, const std::string& where, std::optional<long long> fallback) {
  const json* m = member(obj, key);
  if (!m) {
    if (!fallback) throw ConfigError("config: missing field '" + where + key + "'");
    return *fallback;
  }
  if (!m->is_number_integer()) throw ConfigError("config: field '" + where + key + "' must be an integer");
  return m->get<long long>();
}

std::string text(const json& obj, const char* key, const std::string& where, std::optional<std::string> fallback) {
  const json* m = member(obj, key);
  if (!m) {
    if (!fallback) throw ConfigError("config: missing field '" + where + key + "'");
    return *fallback;
  }
  if (!m->is_string()) throw ConfigError("config: field '" + where + key + "' must be a string");
  return m->get<std::string>();
}

bool boolean(const json& obj, const char* key, const std::string& where, bool fallback) {
  const json* m = member(obj, key);
  if (!m) return fallback;
  if (!m->is_boolean()) throw ConfigError("config: field '" + where + key + "' must be a boolean");
  return m->get<bool>();
}

std::vector<std::string> string_list(const json& obj, const char* key, const std::string& where) {
  const json* m = member(obj, key);
  if (!m) return {};
  if (!m->is_array()) throw ConfigError("config: field '" + where + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *m) {
    if (!e.is_string()) throw ConfigError("config: field '" + where + key + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

void require_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("config: field '" + field + "' must be > 0");
}

std::filesystem::path existing_file(const std::filesystem::path& base, const std::string& rel,
                                    const std::string& field) {
  std::filesystem::path p = std::filesystem::path(rel).is_absolute() ? std::filesystem::path(rel) : base / rel;
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError("config: file for '" + field + "' not found: " + p.string());
  }
  return p;
}

Theta parse_theta(const json& obj, const std::string& where, double delta, double horizon) {
  reject_unknown(obj, where.substr(0, where.size() - 1), {"gamma", "alpha", "eta", "beta", "sigma2"});
  Theta t;
  t.gamma = number(obj, "gamma", where, std::nullopt);
  t.alpha = number(obj, "alpha", where, std::nullopt);
  t.eta = number(obj, "eta", where, std::nullopt);
  t.beta = number(obj, "beta", where, std::nullopt);
  t.sigma2 = number(obj, "sigma2", where, std::nullopt);
  t.delta = delta;
  t.T = horizon;
  try {
    t.validate();
  } catch (const Error& e) {
    throw ConfigError("config: '" + where + "': " + e.what());
  }
  return t;
}

}  // namespace

std::uint64_t config_hash(const json& doc) {
  const std::string canonical = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  reject_unknown(doc, "", {"grid", "boundary", "files", "model", "priors", "mcmc", "seed", "forecast",
                           "simulate", "bundle_max_rows"});
  RunConfig cfg;
  cfg.base_dir = base_dir;
  cfg.hash = config_hash(doc);

  const json& g = object_at(doc, "grid", "", true);
  reject_unknown(g, "grid", {"nx", "ny", "origin", "dx", "dy"});
  cfg.grid.nx = static_cast<int>(integer(g, "nx", "grid.", std::nullopt));
  cfg.grid.ny = static_cast<int>(integer(g, "ny", "grid.", std::nullopt));
  cfg.grid.dx = number(g, "dx", "grid.", std::nullopt);
  cfg.grid.dy = number(g, "dy", "grid.", std::nullopt);
  const json& o = object_at(g, "origin", "grid.", true);
  reject_unknown(o, "grid.origin", {"lon", "lat"});
  cfg.grid.origin = {number(o, "lon", "grid.origin.", std::nullopt), number(o, "lat", "grid.origin.", std::nullopt)};
  try {
    cfg.grid.build();
  } catch (const Error& e) {
    throw ConfigError(std::string("config: 'grid': ") + e.what());
  }

  const std::string boundary = text(doc, "boundary", "", std::string("zero_flux"));
  if (boundary == "zero_flux") cfg.boundary = Boundary::ZeroFlux;
  else if (boundary == "periodic") cfg.boundary = Boundary::Periodic;
  else throw ConfigError("config: field 'boundary' must be \"zero_flux\" or \"periodic\"");

  const json& f = object_at(doc, "files", "", true);
  reject_unknown(f, "files", {"emissions", "wind_u", "wind_v", "sulfate", "population", "mask"});
  cfg.emissions = existing_file(base_dir, text(f, "emissions", "files.", std::nullopt), "files.emissions");
  cfg.wind_u = existing_file(base_dir, text(f, "wind_u", "files.", std::nullopt), "files.wind_u");
  cfg.wind_v = existing_file(base_dir, text(f, "wind_v", "files.", std::nullopt), "files.wind_v");
  cfg.sulfate = existing_file(base_dir, text(f, "sulfate", "files.", std::nullopt), "files.sulfate");
  cfg.population = existing_file(base_dir, text(f, "population", "files.", std::nullopt), "files.population");
  if (member(f, "mask")) cfg.mask = existing_file(base_dir, text(f, "mask", "files.", std::nullopt), "files.mask");

  const json& m = object_at(doc, "model", "", false);
  reject_unknown(m, "model", {"delta", "T"});
  cfg.delta = number(m, "delta", "model.", 50.0);
  cfg.T = number(m, "T", "model.", 1.0);
  require_positive(cfg.delta, "model.delta");
  require_positive(cfg.T, "model.T");

  const json& p = object_at(doc, "priors", "", false);
  reject_unknown(p, "priors", {"gamma_scale", "alpha_scale", "beta_scale", "eta_rate", "sigma2_rate"});
  cfg.priors.gamma_scale = number(p, "gamma_scale", "priors.", cfg.priors.gamma_scale);
  cfg.priors.alpha_scale = number(p, "alpha_scale", "priors.", cfg.priors.alpha_scale);
  cfg.priors.beta_scale = number(p, "beta_scale", "priors.", cfg.priors.beta_scale);
  cfg.priors.eta_rate = number(p, "eta_rate", "priors.", cfg.priors.eta_rate);
  cfg.priors.sigma2_rate = number(p, "sigma2_rate", "priors.", cfg.priors.sigma2_rate);
  cfg.priors.validate();

  const json& mc = object_at(doc, "mcmc", "", false);
  reject_unknown(mc, "mcmc", {"chains", "iterations", "burn_in", "adapt_interval", "target_accept",
                              "initial_step", "beta_update", "init"});
  cfg.mcmc.chains = static_cast<int>(integer(mc, "chains", "mcmc.", 5));
  cfg.mcmc.iterations = static_cast<int>(integer(mc, "iterations", "mcmc.", 150000));
  cfg.mcmc.burn_in = static_cast<int>(integer(mc, "burn_in", "mcmc.", 25000));
  cfg.mcmc.adapt_interval = static_cast<int>(integer(mc, "adapt_interval", "mcmc.", 50));
  cfg.mcmc.target_accept = number(mc, "target_accept", "mcmc.", 0.44);
  if (const json* s = member(mc, "initial_step")) {
    if (!s->is_number()) throw ConfigError("config: field 'mcmc.initial_step' must be a number");
    cfg.mcmc.initial_step.fill(s->get<double>());
  }
  const std::string bu = text(mc, "beta_update", "mcmc.", std::string("gibbs"));
  if (bu == "gibbs") cfg.mcmc.beta_update = BetaUpdate::Gibbs;
  else if (bu == "metropolis") cfg.mcmc.beta_update = BetaUpdate::Metropolis;
  else throw ConfigError("config: field 'mcmc.beta_update' must be \"gibbs\" or \"metropolis\"");
  if (member(mc, "init")) cfg.mcmc.init = parse_theta(object_at(mc, "init", "mcmc.", true), "mcmc.init.", cfg.delta, cfg.T);
  cfg.mcmc.validate();

  const long long seed = integer(doc, "seed", "", 1);
  if (seed < 0) throw ConfigError("config: field 'seed' must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);

  const json& fc = object_at(doc, "forecast", "", false);
  reject_unknown(fc, "forecast", {"fraction", "n_draws", "include_noise", "facilities", "candidates"});
  cfg.forecast.fraction = number(fc, "fraction", "forecast.", 0.8);
  if (!(cfg.forecast.fraction >= 0.0 && cfg.forecast.fraction <= 1.0)) {
    throw ConfigError("config: field 'forecast.fraction' must be in [0, 1]");
  }
  cfg.forecast.n_draws = static_cast<int>(integer(fc, "n_draws", "forecast.", 2000));
  if (cfg.forecast.n_draws < 1) throw ConfigError("config: field 'forecast.n_draws' must be >= 1");
  cfg.forecast.include_noise = boolean(fc, "include_noise", "forecast.", true);
  cfg.forecast.facilities = string_list(fc, "facilities", "forecast.");
  cfg.forecast.candidates = string_list(fc, "candidates", "forecast.");

  const json& sm = object_at(doc, "simulate", "", false);
  reject_unknown(sm, "simulate", {"dt", "n_paths", "thin", "theta"});
  cfg.simulate.dt = number(sm, "dt", "simulate.", 1e-4);
  require_positive(cfg.simulate.dt, "simulate.dt");
  cfg.simulate.n_paths = static_cast<int>(integer(sm, "n_paths", "simulate.", 20));
  if (cfg.simulate.n_paths < 1) throw ConfigError("config: field 'simulate.n_paths' must be >= 1");
  cfg.simulate.thin = static_cast<int>(integer(sm, "thin", "simulate.", 100));
  if (cfg.simulate.thin < 1) throw ConfigError("config: field 'simulate.thin' must be >= 1");
  if (member(sm, "theta")) {
    cfg.simulate.theta = parse_theta(object_at(sm, "theta", "simulate.", true), "simulate.theta.", cfg.delta, cfg.T);
  }

  cfg.bundle_max_rows = static_cast<int>(integer(doc, "bundle_max_rows", "", 5000));
  if (cfg.bundle_max_rows < 1) throw ConfigError("config: field 'bundle_max_rows' must be >= 1");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("config: file not found: " + path.string());
  }
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
  }
  RunConfig cfg = parse_run_config(doc, path.parent_path().empty() ? "." : path.parent_path());
  cfg.path = path;
  return cfg;
}

LoadedData load_data(const RunConfig& cfg) {
  Grid grid = cfg.grid.build();
  const AsciiRaster u = read_ascii_raster(cfg.wind_u);
  const AsciiRaster v = read_ascii_raster(cfg.wind_v);
  FaceWind wind = interpolate_wind(wind_samples_from_rasters(u, v), grid);
  auto parts = std::make_shared<TransportComponents>(assemble_components(grid, wind, cfg.boundary));
  EmissionsInventory inventory = rasterize_emissions(read_emissions_csv(cfg.emissions), grid);
  GriddedField sulfate = gridded_field_from_raster(read_ascii_raster(cfg.sulfate), grid, "sulfate");
  Mask mask = sulfate.valid;
  if (cfg.mask) {
    const GriddedField m = gridded_field_from_raster(read_ascii_raster(*cfg.mask), grid, "mask");
    for (std::size_t k = 0; k < mask.size(); ++k) {
      const bool keep = m.valid[k] && m.values[static_cast<Eigen::Index>(k)] != 0.0;
      mask[k] = mask[k] && keep ? 1 : 0;
    }
  }
  GriddedField pop_field = gridded_field_from_raster(read_ascii_raster(cfg.population), grid, "population");
  Eigen::VectorXd pop = pop_field.values;
  for (Eigen::Index k = 0; k < pop.size(); ++k) {
    if (!pop_field.valid[static_cast<std::size_t>(k)]) pop[k] = 0.0;
  }
  PopulationGrid population = PopulationGrid::from_values(std::move(pop));
  return LoadedData{std::move(grid), std::move(wind), std::move(parts), std::move(inventory),
                    std::move(sulfate), std::move(mask), std::move(population)};
}

InferenceData make_inference_data(const RunConfig& cfg, const LoadedData& data) {
  InferenceData d;
  d.parts = data.parts;
  d.emissions = data.inventory.X;
  d.v_obs = data.sulfate.values;
  d.mask = data.mask;
  bool all_valid = true;
  for (auto m : d.mask) all_valid = all_valid && m;
  if (all_valid) d.mask.clear();
  for (Eigen::Index k = 0; k < d.v_obs.size(); ++k) {
    if (!std::isfinite(d.v_obs[k])) d.v_obs[k] = 0.0;  // masked; never read
  }
  d.delta = cfg.delta;
  d.T = cfg.T;
  return d;
}

}  // namespace oufield
