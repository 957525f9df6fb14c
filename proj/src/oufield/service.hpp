#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "oufield/config.hpp"
#include "oufield/forecast.hpp"

namespace oufield {

// Everything the HTTP service needs to answer forecasts without the raw inputs.
struct ModelBundle {
  GridSpec grid;
  Boundary boundary = Boundary::ZeroFlux;
  FaceWind wind{2, 2};
  std::vector<Facility> facilities;
  Eigen::VectorXd population;
  std::vector<Theta> trace;  // pooled post-burn-in rows (evenly thinned)
  double delta = 50.0;
  double T = 1.0;
  std::string config_hash;
  std::uint64_t seed = 0;

  // Derived on load.
  std::shared_ptr<const TransportComponents> parts;
  EmissionsInventory inventory;
  Theta posterior_mean;
  std::array<double, kNumParams> ci_lo{};
  std::array<double, kNumParams> ci_hi{};
  Eigen::VectorXd baseline_mean;                // mu(theta_bar, X)
  std::vector<Eigen::VectorXd> unit_response;   // per facility: mu(theta_bar, 1 ton at its cell)

  void finalize();
  nlohmann::json to_json() const;
  static ModelBundle from_json(const nlohmann::json& j);
  static ModelBundle load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  ForecastContext context() const;
};

// Evenly spaced subset of at most max_rows rows, first and last kept.
std::vector<Theta> thin_rows(const std::vector<Theta>& rows, int max_rows);

struct HttpResult {
  int status = 200;
  std::string body;
};

// Pure request handlers; a null bundle answers 409.
HttpResult handle_facilities(const ModelBundle* bundle);
HttpResult handle_model(const ModelBundle* bundle);
HttpResult handle_field_mean(const ModelBundle* bundle);
HttpResult handle_forecast(const ModelBundle* bundle, const std::string& body, int threads = 1);

// Blocks serving the four endpoints until the process is stopped.
void serve(std::shared_ptr<const ModelBundle> bundle, const std::string& host, int port, int threads = 1);

}  // namespace oufield
