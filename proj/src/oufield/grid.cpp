#include "oufield/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "oufield/error.hpp"

namespace oufield {

namespace {

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

Grid::Grid(int nx, int ny, LonLat origin, double dx, double dy)
    : nx_(nx), ny_(ny), dx_(dx), dy_(dy), origin_(origin) {
  km_per_deg_lat_ = kKmPerDegree;
  const double mid_lat = origin.lat + 0.5 * ny * dy / km_per_deg_lat_;
  km_per_deg_lon_ = kKmPerDegree * std::cos(deg_to_rad(mid_lat));
  if (!(km_per_deg_lon_ > 0.0)) {
    throw ConfigError("grid: mid-latitude too close to a pole for equirectangular mapping");
  }
}

Grid Grid::build(int nx, int ny, LonLat origin, double dx, double dy) {
  if (nx < 2 || ny < 2) {
    std::ostringstream msg;
    msg << "grid: nx and ny must be >= 2 (got nx=" << nx << ", ny=" << ny << ")";
    throw ConfigError(msg.str());
  }
  if (!(dx > 0.0) || !(dy > 0.0) || !std::isfinite(dx) || !std::isfinite(dy)) {
    throw ConfigError("grid: dx and dy must be positive and finite");
  }
  if (!std::isfinite(origin.lon) || !std::isfinite(origin.lat)) {
    throw ConfigError("grid: origin must be finite");
  }
  return Grid(nx, ny, origin, dx, dy);
}

Grid Grid::strip(int nx, double dx, LonLat origin) {
  if (nx < 2) throw ConfigError("grid: strip needs at least 2 cells");
  if (!(dx > 0.0) || !std::isfinite(dx)) throw ConfigError("grid: dx must be positive and finite");
  return Grid(nx, 1, origin, dx, dx);
}

std::size_t Grid::index(int i, int j) const {
  if (i < 0 || i >= nx_ || j < 0 || j >= ny_) {
    throw DomainError("grid: cell index out of range");
  }
  return static_cast<std::size_t>(j) * nx_ + i;
}

std::pair<int, int> Grid::cell(std::size_t k) const {
  if (k >= size()) throw DomainError("grid: linear index out of range");
  return {static_cast<int>(k % nx_), static_cast<int>(k / nx_)};
}

std::optional<std::size_t> Grid::locate(LonLat p) const {
  const double x = (p.lon - origin_.lon) * km_per_deg_lon_ / dx_;
  const double y = (p.lat - origin_.lat) * km_per_deg_lat_ / dy_;
  if (!std::isfinite(x) || !std::isfinite(y)) return std::nullopt;
  const double fi = std::floor(x);
  const double fj = std::floor(y);
  if (fi < 0 || fj < 0 || fi >= nx_ || fj >= ny_) return std::nullopt;
  return static_cast<std::size_t>(fj) * nx_ + static_cast<std::size_t>(fi);
}

LonLat Grid::cell_center(int i, int j) const {
  return {origin_.lon + (i + 0.5) * dx_ / km_per_deg_lon_,
          origin_.lat + (j + 0.5) * dy_ / km_per_deg_lat_};
}

LonLat Grid::u_face_midpoint(int i_face, int j) const {
  return {origin_.lon + i_face * dx_ / km_per_deg_lon_,
          origin_.lat + (j + 0.5) * dy_ / km_per_deg_lat_};
}

LonLat Grid::v_face_midpoint(int i, int j_face) const {
  return {origin_.lon + (i + 0.5) * dx_ / km_per_deg_lon_,
          origin_.lat + j_face * dy_ / km_per_deg_lat_};
}

FaceWind::FaceWind(int nx, int ny)
    : nx_(nx),
      ny_(ny),
      u_(static_cast<std::size_t>(nx + 1) * ny, 0.0),
      v_(static_cast<std::size_t>(nx) * (ny + 1), 0.0) {}

FaceWind FaceWind::uniform(const Grid& grid, double u, double v) {
  FaceWind w(grid.nx(), grid.ny());
  std::fill(w.u_.begin(), w.u_.end(), u);
  std::fill(w.v_.begin(), w.v_.end(), v);
  return w;
}

const Facility* EmissionsInventory::find(const std::string& id) const {
  for (const auto& f : facilities) {
    if (f.id == id) return &f;
  }
  return nullptr;
}

std::optional<std::size_t> EmissionsInventory::cell_of_facility(const std::string& id) const {
  for (std::size_t i = 0; i < facilities.size(); ++i) {
    if (facilities[i].id == id) return cell_of[i];
  }
  return std::nullopt;
}

EmissionsInventory rasterize_emissions(const std::vector<Facility>& facilities, const Grid& grid) {
  EmissionsInventory inv;
  inv.facilities = facilities;
  inv.X = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  if (facilities.empty()) {
    inv.warnings.push_back("emissions: facility list is empty; inventory is all zero");
  }
  for (const auto& f : facilities) {
    if (!std::isfinite(f.lon) || !std::isfinite(f.lat)) {
      throw DataError("emissions: facility '" + f.id + "' has non-finite coordinates");
    }
    if (!(f.so2_tons >= 0.0) || !std::isfinite(f.so2_tons)) {
      throw DataError("emissions: facility '" + f.id + "' has negative or non-finite tonnage");
    }
    auto k = grid.locate({f.lon, f.lat});
    inv.cell_of.push_back(k);
    if (k) {
      inv.X[static_cast<Eigen::Index>(*k)] += f.so2_tons;
    } else {
      inv.out_of_domain.push_back(f.id);
    }
  }
  return inv;
}

namespace {

// Locate x in sorted nodes; returns lower node index and weight in [0, 1].
std::pair<std::size_t, double> bracket(const std::vector<double>& nodes, double x) {
  if (x <= nodes.front()) return {0, 0.0};
  if (x >= nodes.back()) return {nodes.size() - 2, 1.0};
  auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - nodes.begin());
  std::size_t lo = hi - 1;
  return {lo, (x - nodes[lo]) / (nodes[hi] - nodes[lo])};
}

}  // namespace

FaceWind interpolate_wind(const std::vector<WindSample>& samples, const Grid& grid) {
  std::vector<double> lons;
  std::vector<double> lats;
  for (const auto& s : samples) {
    if (!std::isfinite(s.lon) || !std::isfinite(s.lat) || !std::isfinite(s.u) ||
        !std::isfinite(s.v)) {
      throw DataError("wind: non-finite sample");
    }
    lons.push_back(s.lon);
    lats.push_back(s.lat);
  }
  auto unique_sorted = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  unique_sorted(lons);
  unique_sorted(lats);
  if (samples.size() < 4 || lons.size() < 2 || lats.size() < 2) {
    throw DataError("wind: need at least 4 non-collinear samples for bilinear interpolation");
  }
  const std::size_t nlon = lons.size();
  const std::size_t nlat = lats.size();
  if (samples.size() != nlon * nlat) {
    throw DataError("wind: samples do not form a complete lon/lat lattice");
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> u_lat(nlon * nlat, nan);
  std::vector<double> v_lat(nlon * nlat, nan);
  for (const auto& s : samples) {
    auto ia = static_cast<std::size_t>(std::lower_bound(lons.begin(), lons.end(), s.lon) - lons.begin());
    auto ja = static_cast<std::size_t>(std::lower_bound(lats.begin(), lats.end(), s.lat) - lats.begin());
    const std::size_t k = ja * nlon + ia;
    if (!std::isnan(u_lat[k])) throw DataError("wind: duplicate sample location");
    u_lat[k] = s.u;
    v_lat[k] = s.v;
  }

  auto eval = [&](const std::vector<double>& f, LonLat p) {
    auto [i0, wx] = bracket(lons, p.lon);
    auto [j0, wy] = bracket(lats, p.lat);
    const double f00 = f[j0 * nlon + i0];
    const double f10 = f[j0 * nlon + i0 + 1];
    const double f01 = f[(j0 + 1) * nlon + i0];
    const double f11 = f[(j0 + 1) * nlon + i0 + 1];
    return (1 - wx) * (1 - wy) * f00 + wx * (1 - wy) * f10 + (1 - wx) * wy * f01 + wx * wy * f11;
  };

  FaceWind wind(grid.nx(), grid.ny());
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i <= grid.nx(); ++i) wind.u(i, j) = eval(u_lat, grid.u_face_midpoint(i, j));
  }
  for (int j = 0; j <= grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) wind.v(i, j) = eval(v_lat, grid.v_face_midpoint(i, j));
  }
  return wind;
}

PopulationGrid PopulationGrid::from_values(Eigen::VectorXd values) {
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (!(values[k] >= 0.0) || !std::isfinite(values[k])) {
      throw DataError("population: values must be finite and nonnegative");
    }
  }
  return PopulationGrid{std::move(values)};
}

}  // namespace oufield
