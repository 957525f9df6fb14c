// Writes the synthetic 4x4 fixture: emissions, wind, population, a sulfate
// field drawn from the coupled model at a known theta, and a small config.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>

#include "json.hpp"
#include "oufield/config.hpp"
#include "oufield/io.hpp"
#include "oufield/pipeline.hpp"
#include "oufield/sulfate_model.hpp"

namespace fs = std::filesystem;
using namespace oufield;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: make_fixture OUT_DIR\n");
    return 1;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);

  const int nx = 4, ny = 4;
  const double dx = 14.0, dy = 14.0;
  const Grid grid = Grid::build(nx, ny, {-90.0, 38.0}, dx, dy);

  std::vector<Facility> facilities;
  const struct { const char* id; const char* name; int i, j; double tons; } plants[] = {
      {"P1", "Ridge Station", 1, 1, 60000.0},
      {"P2", "Creek Station", 2, 2, 40000.0},
      {"P3", "Valley Station", 0, 3, 25000.0},
  };
  for (const auto& p : plants) {
    const LonLat c = grid.cell_center(p.i, p.j);
    facilities.push_back({p.id, p.name, c.lon, c.lat, p.tons});
  }
  write_emissions_csv(dir / "emissions.csv", facilities);

  Eigen::VectorXd u(grid.size()), v(grid.size()), pop(grid.size());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const auto k = static_cast<Eigen::Index>(grid.index(i, j));
      u[k] = 3.0 + 0.25 * j;
      v[k] = 1.0 - 0.1 * i;
      pop[k] = 1000.0 * (1 + (i * 7 + j * 3) % 11);
    }
  }
  write_ascii_raster(dir / "wind_u.asc", raster_from_grid_field(grid, u));
  write_ascii_raster(dir / "wind_v.asc", raster_from_grid_field(grid, v));
  write_ascii_raster(dir / "population.asc", raster_from_grid_field(grid, pop));

  // Wind as the loader will see it, so the field is drawn from the fitted model's own operator.
  const FaceWind wind =
      interpolate_wind(wind_samples_from_rasters(read_ascii_raster(dir / "wind_u.asc"),
                                                 read_ascii_raster(dir / "wind_v.asc")),
                       grid);
  auto parts = std::make_shared<TransportComponents>(assemble_components(grid, wind));
  const EmissionsInventory inv = rasterize_emissions(facilities, grid);
  const Theta truth = reference_theta(50.0, 1.0);
  SulfateModel model(parts, inv.X, truth);
  Rng rng = make_rng(20240611);
  const Eigen::VectorXd field = model.sample_field(rng);
  write_ascii_raster(dir / "sulfate.asc", raster_from_grid_field(grid, field));

  nlohmann::ordered_json cfg;
  cfg["grid"] = {{"nx", nx}, {"ny", ny}, {"origin", {{"lon", -90.0}, {"lat", 38.0}}}, {"dx", dx}, {"dy", dy}};
  cfg["files"] = {{"emissions", "emissions.csv"}, {"wind_u", "wind_u.asc"}, {"wind_v", "wind_v.asc"},
                  {"sulfate", "sulfate.asc"}, {"population", "population.asc"}};
  cfg["model"] = {{"delta", 50.0}, {"T", 1.0}};
  cfg["mcmc"] = {{"chains", 2}, {"iterations", 20000}, {"burn_in", 5000}};
  cfg["seed"] = 7;
  cfg["forecast"] = {{"fraction", 0.8}, {"n_draws", 400}, {"candidates", {"P1", "P2", "P3"}}};
  cfg["simulate"] = {{"dt", 1e-3}, {"n_paths", 4}, {"thin", 50}};
  cfg["bundle_max_rows"] = 1000;
  write_text_file(dir / "config.json", cfg.dump(2) + "\n");
  std::cout << "wrote fixture to " << dir.string() << "\n";
  return 0;
}
