#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "oufield/grid.hpp"
#include "oufield/inference.hpp"
#include "oufield/io.hpp"
#include "oufield/transport.hpp"

namespace oufield {

struct GridSpec {
  int nx = 0;
  int ny = 0;
  LonLat origin;
  double dx = 0.0;
  double dy = 0.0;

  Grid build() const { return Grid::build(nx, ny, origin, dx, dy); }
};

struct ForecastSettings {
  double fraction = 0.8;
  int n_draws = 2000;
  bool include_noise = true;
  std::vector<std::string> facilities;  // scenario; empty: every facility
  std::vector<std::string> candidates;  // ranking; empty: no ranking
};

struct SimulateSettings {
  double dt = 1e-4;
  int n_paths = 20;
  int thin = 100;
  std::optional<Theta> theta;  // default: posterior mean from the bundle, else Table-1-like values
};

struct RunConfig {
  std::filesystem::path path;
  std::filesystem::path base_dir;

  GridSpec grid;
  Boundary boundary = Boundary::ZeroFlux;

  std::filesystem::path emissions;
  std::filesystem::path wind_u;
  std::filesystem::path wind_v;
  std::filesystem::path sulfate;
  std::filesystem::path population;
  std::optional<std::filesystem::path> mask;

  double delta = 50.0;
  double T = 1.0;
  PriorSpec priors;
  McmcConfig mcmc;
  std::uint64_t seed = 1;
  ForecastSettings forecast;
  SimulateSettings simulate;
  int bundle_max_rows = 5000;

  std::uint64_t hash = 0;
};

// Paths are resolved against the config file's directory. Omitted optional
// fields take defaults (5 chains, 150000 iterations, 25000 burn-in, delta 50, T 1).
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

// FNV-1a 64 of the canonical (key-sorted, compact) JSON text.
std::uint64_t config_hash(const nlohmann::json& doc);
std::string hash_hex(std::uint64_t h);

struct LoadedData {
  Grid grid;
  FaceWind wind;
  std::shared_ptr<const TransportComponents> parts;
  EmissionsInventory inventory;
  GriddedField sulfate;
  Mask mask;
  PopulationGrid population;
};

LoadedData load_data(const RunConfig& cfg);

InferenceData make_inference_data(const RunConfig& cfg, const LoadedData& data);

}  // namespace oufield
