#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "oufield/grid.hpp"

namespace oufield {

// ESRI ASCII grid. `values` is row-major with the north row first, as on disk.
struct AsciiRaster {
  int ncols = 0;
  int nrows = 0;
  double xllcorner = 0.0;
  double yllcorner = 0.0;
  double cellsize = 1.0;
  double nodata = -9999.0;
  std::vector<double> values;

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * ncols + col]; }
  bool is_nodata(double v) const { return v == nodata; }
};

AsciiRaster read_ascii_raster(const std::filesystem::path& path);
AsciiRaster parse_ascii_raster(std::istream& in, const std::string& what);
void write_ascii_raster(const std::filesystem::path& path, const AsciiRaster& raster);

// Raster with ncols = nx, nrows = ny placed on the grid's bounding box.
AsciiRaster raster_from_grid_field(const Grid& grid, const Eigen::VectorXd& field,
                                   const std::vector<std::uint8_t>& valid = {});

struct GriddedField {
  Eigen::VectorXd values;           // NODATA cells hold NaN
  std::vector<std::uint8_t> valid;  // 1 where a value is present
};

// Map a raster whose dimensions equal the grid's (nrows = ny, ncols = nx)
// onto grid order (j = 0 is the southern row).
GriddedField gridded_field_from_raster(const AsciiRaster& raster, const Grid& grid,
                                       const std::string& what);

// Wind samples at the centers of two co-registered rasters (u and v components).
std::vector<WindSample> wind_samples_from_rasters(const AsciiRaster& u, const AsciiRaster& v);

// Header: facility_id,name,lon,lat,so2_tons
std::vector<Facility> read_emissions_csv(const std::filesystem::path& path);
std::vector<Facility> parse_emissions_csv(std::istream& in);
void write_emissions_csv(const std::filesystem::path& path, const std::vector<Facility>& facilities);

void write_matrix_market(std::ostream& out, const Eigen::SparseMatrix<double>& m);
void write_matrix_market(std::ostream& out, const Eigen::MatrixXd& m);
void write_vector(std::ostream& out, const Eigen::VectorXd& v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Round-trip exact formatting for doubles in text outputs.
std::string format_double(double x);

}  // namespace oufield
