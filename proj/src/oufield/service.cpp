#include "oufield/service.hpp"

#include <cmath>
#include <set>

#include "httplib.h"

#include "oufield/error.hpp"
#include "oufield/io.hpp"

namespace oufield {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

Eigen::VectorXd vector_from_json(const json& a, const char* what) {
  if (!a.is_array()) throw DataError(std::string("bundle: '") + what + "' must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) v[static_cast<Eigen::Index>(k)] = a[k].get<double>();
  return v;
}

json error_body(const std::string& code, const std::string& message) {
  return json{{"error", {{"code", code}, {"message", message}}}};
}

HttpResult error_result(int status, const std::string& code, const std::string& message) {
  return {status, error_body(code, message).dump()};
}

HttpResult no_model() { return error_result(409, "no_model", "no model bundle is loaded"); }

bool all_finite(const json& j) {
  if (j.is_number_float()) return std::isfinite(j.get<double>());
  if (j.is_array() || j.is_object()) {
    for (const auto& e : j) {
      if (!all_finite(e)) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Theta> thin_rows(const std::vector<Theta>& rows, int max_rows) {
  if (max_rows < 1) throw DomainError("thin: max_rows must be >= 1");
  if (rows.size() <= static_cast<std::size_t>(max_rows)) return rows;
  std::vector<Theta> out;
  if (max_rows == 1) return {rows.front()};
  const double stride = static_cast<double>(rows.size() - 1) / (max_rows - 1);
  for (int i = 0; i < max_rows; ++i) {
    out.push_back(rows[static_cast<std::size_t>(std::llround(i * stride))]);
  }
  return out;
}

void ModelBundle::finalize() {
  if (trace.empty()) throw DataError("bundle: trace is empty");
  const Grid g = grid.build();
  if (!wind.matches(g)) throw DataError("bundle: wind dimensions do not match the grid");
  if (static_cast<std::size_t>(population.size()) != g.size()) {
    throw DataError("bundle: population length does not match the grid");
  }
  parts = std::make_shared<TransportComponents>(assemble_components(g, wind, boundary));
  inventory = rasterize_emissions(facilities, g);

  std::array<double, kNumParams> mean{};
  std::array<std::vector<double>, kNumParams> cols;
  const auto first = theta_values(trace.front());
  for (const auto& t : trace) {
    const auto v = theta_values(t);
    for (int p = 0; p < kNumParams; ++p) {
      mean[p] += v[p] - first[p];
      cols[p].push_back(v[p]);
    }
  }
  for (int p = 0; p < kNumParams; ++p) {
    mean[p] = first[p] + mean[p] / static_cast<double>(trace.size());
    ci_lo[p] = quantile(cols[p], 0.025);
    ci_hi[p] = quantile(cols[p], 0.975);
  }
  posterior_mean = theta_from_values(mean, delta, T);
  for (auto& t : trace) {
    t.delta = delta;
    t.T = T;
  }

  SulfateModel model(parts, inventory.X, posterior_mean);
  baseline_mean = model.so4_mean();
  unit_response.clear();
  for (std::size_t i = 0; i < facilities.size(); ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
    if (inventory.cell_of[i]) e[static_cast<Eigen::Index>(*inventory.cell_of[i])] = 1.0;
    unit_response.push_back(model.so4_mean_for(e));
  }
}

json ModelBundle::to_json() const {
  json j;
  j["format"] = "oufield-bundle/1";
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["grid"] = {{"nx", grid.nx}, {"ny", grid.ny}, {"origin", {{"lon", grid.origin.lon}, {"lat", grid.origin.lat}}},
               {"dx", grid.dx}, {"dy", grid.dy}};
  j["boundary"] = boundary == Boundary::Periodic ? "periodic" : "zero_flux";
  j["wind"] = {{"u", wind.u_values()}, {"v", wind.v_values()}};
  json fac = json::array();
  for (const auto& f : facilities) {
    fac.push_back({{"id", f.id}, {"name", f.name}, {"lon", f.lon}, {"lat", f.lat}, {"so2_tons", f.so2_tons}});
  }
  j["facilities"] = fac;
  j["population"] = vector_json(population);
  j["delta"] = delta;
  j["T"] = T;
  json rows = json::array();
  for (const auto& t : trace) {
    const auto v = theta_values(t);
    rows.push_back(json(std::vector<double>(v.begin(), v.end())));
  }
  j["trace"] = {{"columns", {"gamma", "alpha", "eta", "beta", "sigma2"}}, {"rows", rows}};
  return j;
}

ModelBundle ModelBundle::from_json(const json& j) {
  try {
    if (j.value("format", "") != "oufield-bundle/1") throw DataError("bundle: unknown format tag");
    ModelBundle b;
    b.config_hash = j.value("config_hash", "");
    b.seed = j.value("seed", std::uint64_t{0});
    const json& g = j.at("grid");
    b.grid.nx = g.at("nx").get<int>();
    b.grid.ny = g.at("ny").get<int>();
    b.grid.dx = g.at("dx").get<double>();
    b.grid.dy = g.at("dy").get<double>();
    b.grid.origin = {g.at("origin").at("lon").get<double>(), g.at("origin").at("lat").get<double>()};
    b.boundary = j.value("boundary", "zero_flux") == "periodic" ? Boundary::Periodic : Boundary::ZeroFlux;
    b.wind = FaceWind(b.grid.nx, b.grid.ny);
    const auto u = j.at("wind").at("u").get<std::vector<double>>();
    const auto v = j.at("wind").at("v").get<std::vector<double>>();
    if (u.size() != b.wind.u_values().size() || v.size() != b.wind.v_values().size()) {
      throw DataError("bundle: wind arrays have the wrong size");
    }
    b.wind.u_values() = u;
    b.wind.v_values() = v;
    for (const auto& f : j.at("facilities")) {
      b.facilities.push_back({f.at("id").get<std::string>(), f.value("name", ""), f.at("lon").get<double>(),
                              f.at("lat").get<double>(), f.at("so2_tons").get<double>()});
    }
    b.population = vector_from_json(j.at("population"), "population");
    b.delta = j.at("delta").get<double>();
    b.T = j.at("T").get<double>();
    for (const auto& row : j.at("trace").at("rows")) {
      const auto r = row.get<std::vector<double>>();
      if (r.size() != kNumParams) throw DataError("bundle: trace rows must have 5 columns");
      b.trace.push_back(theta_from_values({r[0], r[1], r[2], r[3], r[4]}, b.delta, b.T));
    }
    b.finalize();
    return b;
  } catch (const json::exception& e) {
    throw DataError(std::string("bundle: malformed document: ") + e.what());
  }
}

ModelBundle ModelBundle::load(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw DataError("bundle: file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw DataError("bundle: invalid JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ModelBundle::save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump() + "\n"); }

ForecastContext ModelBundle::context() const { return ForecastContext{parts, inventory.X, trace}; }

HttpResult handle_facilities(const ModelBundle* bundle) {
  if (!bundle) return no_model();
  json a = json::array();
  for (const auto& f : bundle->facilities) {
    a.push_back({{"id", f.id}, {"name", f.name}, {"lon", f.lon}, {"lat", f.lat}, {"so2_tons", f.so2_tons}});
  }
  return {200, a.dump()};
}

HttpResult handle_model(const ModelBundle* bundle) {
  if (!bundle) return no_model();
  json mean, ci;
  const auto m = theta_values(bundle->posterior_mean);
  for (int p = 0; p < kNumParams; ++p) {
    mean[kParamNames[p]] = m[p];
    ci[kParamNames[p]] = {bundle->ci_lo[p], bundle->ci_hi[p]};
  }
  json j;
  j["theta_posterior_mean"] = mean;
  j["ci95"] = ci;
  j["grid"] = {{"nx", bundle->grid.nx},
               {"ny", bundle->grid.ny},
               {"origin", {{"lon", bundle->grid.origin.lon}, {"lat", bundle->grid.origin.lat}}},
               {"dx", bundle->grid.dx},
               {"dy", bundle->grid.dy}};
  j["delta"] = bundle->delta;
  j["T"] = bundle->T;
  j["n_trace"] = bundle->trace.size();
  return {200, j.dump()};
}

HttpResult handle_field_mean(const ModelBundle* bundle) {
  if (!bundle) return no_model();
  json j;
  j["mean_field"] = vector_json(bundle->baseline_mean);
  j["nx"] = bundle->grid.nx;
  j["ny"] = bundle->grid.ny;
  return {200, j.dump()};
}

namespace {

struct ForecastRequest {
  std::map<std::string, double> reductions;
  double fraction_default = 0.8;
  int n_draws = 200;
  std::uint64_t seed = 0;
  bool preview = true;
  bool include_noise = true;
  std::optional<std::vector<std::string>> rank;
};

ForecastRequest parse_forecast_request(const ModelBundle& b, const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed JSON body: ") + e.what());
  }
  if (!j.is_object()) throw DataError("request body must be a JSON object");
  static const std::set<std::string> allowed = {"reductions", "fraction_default", "n_draws", "seed",
                                                "mode", "rank", "include_noise"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw DataError("unknown request field '" + it.key() + "'");
  }
  ForecastRequest r;
  if (j.contains("reductions")) {
    const json& red = j["reductions"];
    if (!red.is_object()) throw DataError("'reductions' must be an object of id -> fraction");
    for (auto it = red.begin(); it != red.end(); ++it) {
      if (!it->is_number()) throw DataError("fraction for '" + it.key() + "' must be a number");
      r.reductions[it.key()] = it->get<double>();
    }
  }
  if (j.contains("fraction_default")) {
    if (!j["fraction_default"].is_number()) throw DataError("'fraction_default' must be a number");
    r.fraction_default = j["fraction_default"].get<double>();
  }
  if (!(r.fraction_default >= 0.0 && r.fraction_default <= 1.0)) {
    throw DataError("'fraction_default' must be in [0, 1]");
  }
  if (j.contains("n_draws")) {
    if (!j["n_draws"].is_number_integer()) throw DataError("'n_draws' must be an integer");
    const auto n = j["n_draws"].get<long long>();
    if (n < 1 || n > 100000) throw DataError("'n_draws' must be in [1, 100000]");
    r.n_draws = static_cast<int>(n);
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw DataError("'seed' must be a nonnegative integer");
    r.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("mode")) {
    const std::string mode = j["mode"].is_string() ? j["mode"].get<std::string>() : "";
    if (mode != "preview" && mode != "full") throw DataError("'mode' must be \"preview\" or \"full\"");
    r.preview = mode == "preview";
  }
  if (j.contains("include_noise")) {
    if (!j["include_noise"].is_boolean()) throw DataError("'include_noise' must be a boolean");
    r.include_noise = j["include_noise"].get<bool>();
  }
  if (j.contains("rank")) {
    const json& rk = j["rank"];
    if (!rk.is_array()) throw DataError("'rank' must be an array of facility ids");
    std::vector<std::string> ids;
    for (const auto& e : rk) {
      if (!e.is_string()) throw DataError("'rank' must be an array of facility ids");
      if (!b.inventory.find(e.get<std::string>())) {
        throw DataError("unknown facility id '" + e.get<std::string>() + "'");
      }
      ids.push_back(e.get<std::string>());
    }
    r.rank = std::move(ids);
  }
  return r;
}

// Linear combination of unit responses at the posterior mean.
Eigen::VectorXd preview_field(const ModelBundle& b, const Scenario& sc, const std::map<std::string, double>& committed) {
  Eigen::VectorXd field = Eigen::VectorXd::Zero(b.population.size());
  for (const auto& [id, fraction] : sc.reductions) {
    double remaining = 1.0;
    if (auto it = committed.find(id); it != committed.end()) remaining = 1.0 - it->second;
    for (std::size_t i = 0; i < b.facilities.size(); ++i) {
      if (b.facilities[i].id == id) field += fraction * remaining * b.facilities[i].so2_tons * b.unit_response[i];
    }
  }
  return field;
}

json exposure_json(double mean, double lo, double hi, double se) {
  return {{"mean", mean}, {"lo", lo}, {"hi", hi}, {"std_error", se}};
}

}  // namespace

HttpResult handle_forecast(const ModelBundle* bundle, const std::string& body, int threads) {
  if (!bundle) return no_model();
  ForecastRequest req;
  Scenario scenario;
  try {
    req = parse_forecast_request(*bundle, body);
    scenario = Scenario::make(bundle->inventory, req.reductions, "request");
  } catch (const Error& e) {
    return error_result(400, "bad_request", e.what());
  }
  try {
    json out;
    out["mode"] = req.preview ? "preview" : "full";
    out["seed"] = req.seed;
    const std::map<std::string, double> no_commit;
    if (req.preview) {
      const Eigen::VectorXd field = preview_field(*bundle, scenario, no_commit);
      const double e = population_exposure(field, bundle->population);
      out["n_draws"] = 0;
      out["mean_field"] = vector_json(field);
      out["exposure"] = exposure_json(e, e, e, 0.0);
      if (req.rank) {
        std::vector<std::pair<double, std::string>> rows;
        for (const auto& id : *req.rank) {
          const Scenario single = Scenario::make(bundle->inventory, {{id, req.fraction_default}}, id);
          rows.emplace_back(population_exposure(preview_field(*bundle, single, req.reductions), bundle->population), id);
        }
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first > b.first;
          return a.second < b.second;
        });
        json ranking = json::array();
        for (const auto& [m, id] : rows) ranking.push_back({{"id", id}, {"mean", m}, {"lo", m}, {"hi", m}});
        out["ranking"] = ranking;
      }
    } else {
      const ForecastContext ctx = bundle->context();
      ForecastOptions opts;
      opts.n_draws = req.n_draws;
      opts.seed = req.seed;
      opts.include_noise = req.include_noise;
      opts.threads = threads;
      const Eigen::VectorXd x_star = apply_scenario(bundle->inventory, scenario);
      const ExposureSummary s =
          summarize_exposure(forecast_reduction(ctx, x_star, opts), bundle->population, "request");
      out["n_draws"] = req.n_draws;
      out["mean_field"] = vector_json(s.mean_field);
      out["exposure"] = exposure_json(s.mean, s.lo, s.hi, s.std_error);
      if (req.rank) {
        const auto ranked = rank_facilities(ctx, bundle->inventory, *req.rank, req.fraction_default,
                                            bundle->population, opts, req.reductions);
        json ranking = json::array();
        for (const auto& r : ranked) ranking.push_back({{"id", r.label}, {"mean", r.mean}, {"lo", r.lo}, {"hi", r.hi}});
        out["ranking"] = ranking;
      }
    }
    if (!all_finite(out)) return error_result(500, "numerical", "forecast produced non-finite values");
    return {200, out.dump()};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Domain || e.kind() == ErrorKind::Data) {
      return error_result(400, "bad_request", e.what());
    }
    return error_result(500, to_string(e.kind()), e.what());
  }
}

void serve(std::shared_ptr<const ModelBundle> bundle, const std::string& host, int port, int threads) {
  httplib::Server server;
  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json; charset=utf-8");
  };
  server.Get("/api/facilities", [&](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_facilities(bundle.get()));
  });
  server.Get("/api/model", [&](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_model(bundle.get()));
  });
  server.Get("/api/field/mean", [&](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_field_mean(bundle.get()));
  });
  server.Post("/api/forecast", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_forecast(bundle.get(), req.body, threads));
  });
  if (!server.listen(host, port)) {
    throw IoError("serve: could not listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace oufield
