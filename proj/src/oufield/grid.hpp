#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace oufield {

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};

inline constexpr double kKmPerDegree = 111.2;

// Rectangular finite-volume grid. Cell (i, j) has i running west to east and
// j running south to north; the linear index is k = j * nx + i.
//
// Geographic coordinates are mapped with an equirectangular approximation:
// one degree of latitude is 111.2 km, one degree of longitude is
// 111.2 * cos(mid-latitude) km.
class Grid {
 public:
  // nx, ny >= 2 and dx, dy > 0 (km).
  static Grid build(int nx, int ny, LonLat origin, double dx, double dy);

  // Single-row grid (ny = 1) for one-dimensional operator work.
  static Grid strip(int nx, double dx, LonLat origin = {});

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double dx() const noexcept { return dx_; }
  double dy() const noexcept { return dy_; }
  LonLat origin() const noexcept { return origin_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx_) * ny_; }
  double cell_area() const noexcept { return dx_ * dy_; }

  double km_per_deg_lon() const noexcept { return km_per_deg_lon_; }
  double km_per_deg_lat() const noexcept { return km_per_deg_lat_; }

  std::size_t index(int i, int j) const;
  std::pair<int, int> cell(std::size_t k) const;

  // Bounding box in degrees.
  double lon_min() const noexcept { return origin_.lon; }
  double lat_min() const noexcept { return origin_.lat; }
  double lon_max() const noexcept { return origin_.lon + nx_ * dx_ / km_per_deg_lon_; }
  double lat_max() const noexcept { return origin_.lat + ny_ * dy_ / km_per_deg_lat_; }

  // Half-open cells: a point on a shared edge belongs to the cell east/north of it.
  std::optional<std::size_t> locate(LonLat p) const;

  LonLat cell_center(int i, int j) const;
  // Midpoint of the west face of column i_face (0..nx) in row j.
  LonLat u_face_midpoint(int i_face, int j) const;
  // Midpoint of the south face of row j_face (0..ny) in column i.
  LonLat v_face_midpoint(int i, int j_face) const;

 private:
  Grid(int nx, int ny, LonLat origin, double dx, double dy);

  int nx_;
  int ny_;
  double dx_;
  double dy_;
  LonLat origin_;
  double km_per_deg_lon_;
  double km_per_deg_lat_;
};

// Staggered (Arakawa-C) wind: u on west/east faces, v on south/north faces.
class FaceWind {
 public:
  FaceWind(int nx, int ny);
  static FaceWind uniform(const Grid& grid, double u, double v);

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }

  // i_face in [0, nx], j in [0, ny).
  double& u(int i_face, int j) { return u_[static_cast<std::size_t>(j) * (nx_ + 1) + i_face]; }
  double u(int i_face, int j) const { return u_[static_cast<std::size_t>(j) * (nx_ + 1) + i_face]; }
  // i in [0, nx), j_face in [0, ny].
  double& v(int i, int j_face) { return v_[static_cast<std::size_t>(j_face) * nx_ + i]; }
  double v(int i, int j_face) const { return v_[static_cast<std::size_t>(j_face) * nx_ + i]; }

  const std::vector<double>& u_values() const noexcept { return u_; }
  const std::vector<double>& v_values() const noexcept { return v_; }
  std::vector<double>& u_values() noexcept { return u_; }
  std::vector<double>& v_values() noexcept { return v_; }

  bool matches(const Grid& grid) const noexcept { return grid.nx() == nx_ && grid.ny() == ny_; }

 private:
  int nx_;
  int ny_;
  std::vector<double> u_;
  std::vector<double> v_;
};

struct Facility {
  std::string id;
  std::string name;
  double lon = 0.0;
  double lat = 0.0;
  double so2_tons = 0.0;
};

struct EmissionsInventory {
  std::vector<Facility> facilities;
  // Cell of each facility (parallel to `facilities`); nullopt when out of domain.
  std::vector<std::optional<std::size_t>> cell_of;
  Eigen::VectorXd X;  // tons/yr per cell
  std::vector<std::string> out_of_domain;
  std::vector<std::string> warnings;

  const Facility* find(const std::string& id) const;
  std::optional<std::size_t> cell_of_facility(const std::string& id) const;
};

EmissionsInventory rasterize_emissions(const std::vector<Facility>& facilities, const Grid& grid);

struct WindSample {
  double lon = 0.0;
  double lat = 0.0;
  double u = 0.0;
  double v = 0.0;
};

// Bilinear interpolation of lattice samples at face midpoints. Samples must
// form a complete lon x lat lattice (as produced by a raster); points outside
// the lattice hull are clamped onto it.
FaceWind interpolate_wind(const std::vector<WindSample>& samples, const Grid& grid);

struct PopulationGrid {
  Eigen::VectorXd pop;

  static PopulationGrid from_values(Eigen::VectorXd values);
};

}  // namespace oufield
