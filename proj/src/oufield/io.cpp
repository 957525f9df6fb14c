#include "oufield/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "oufield/error.hpp"

namespace oufield {

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& token, const std::string& what) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw DataError(what + ": cannot parse number '" + token + "'");
  }
  return value;
}

// Split a CSV line honouring double-quoted fields.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

AsciiRaster parse_ascii_raster(std::istream& in, const std::string& what) {
  AsciiRaster r;
  std::map<std::string, double> header;
  bool have_center_x = false;
  bool have_center_y = false;
  std::string key;
  // Header lines are "key value"; the first token that is not a known key starts the data.
  const std::vector<std::string> keys = {"ncols",     "nrows",     "xllcorner",   "yllcorner",
                                         "xllcenter", "yllcenter", "cellsize",    "nodata_value"};
  std::vector<std::string> pending;
  while (in >> key) {
    const std::string k = lower(key);
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      pending.push_back(key);
      break;
    }
    std::string value;
    if (!(in >> value)) throw DataError(what + ": truncated header");
    header[k] = parse_number(value, what);
    if (k == "xllcenter") have_center_x = true;
    if (k == "yllcenter") have_center_y = true;
  }
  for (const char* required : {"ncols", "nrows", "cellsize"}) {
    if (!header.count(required)) throw DataError(what + ": missing header field '" + required + "'");
  }
  r.ncols = static_cast<int>(header["ncols"]);
  r.nrows = static_cast<int>(header["nrows"]);
  r.cellsize = header["cellsize"];
  if (r.ncols <= 0 || r.nrows <= 0 || !(r.cellsize > 0.0)) {
    throw DataError(what + ": invalid raster dimensions");
  }
  r.xllcorner = have_center_x ? header["xllcenter"] - 0.5 * r.cellsize : header["xllcorner"];
  r.yllcorner = have_center_y ? header["yllcenter"] - 0.5 * r.cellsize : header["yllcorner"];
  if (header.count("nodata_value")) r.nodata = header["nodata_value"];

  const std::size_t count = static_cast<std::size_t>(r.ncols) * r.nrows;
  r.values.reserve(count);
  for (const auto& tok : pending) r.values.push_back(parse_number(tok, what));
  std::string tok;
  while (r.values.size() < count && in >> tok) r.values.push_back(parse_number(tok, what));
  if (r.values.size() != count) {
    throw DataError(what + ": expected " + std::to_string(count) + " values, found " +
                    std::to_string(r.values.size()));
  }
  if (in >> tok) throw DataError(what + ": trailing data after raster values");
  return r;
}

AsciiRaster read_ascii_raster(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open raster '" + path.string() + "'");
  return parse_ascii_raster(in, path.string());
}

void write_ascii_raster(const std::filesystem::path& path, const AsciiRaster& r) {
  std::ostringstream out;
  out << "ncols " << r.ncols << "\n"
      << "nrows " << r.nrows << "\n"
      << "xllcorner " << format_double(r.xllcorner) << "\n"
      << "yllcorner " << format_double(r.yllcorner) << "\n"
      << "cellsize " << format_double(r.cellsize) << "\n"
      << "NODATA_value " << format_double(r.nodata) << "\n";
  for (int row = 0; row < r.nrows; ++row) {
    for (int col = 0; col < r.ncols; ++col) {
      if (col) out << ' ';
      out << format_double(r.at(row, col));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

AsciiRaster raster_from_grid_field(const Grid& grid, const Eigen::VectorXd& field,
                                   const std::vector<std::uint8_t>& valid) {
  AsciiRaster r;
  r.ncols = grid.nx();
  r.nrows = grid.ny();
  r.xllcorner = grid.origin().lon;
  r.yllcorner = grid.origin().lat;
  r.cellsize = grid.dy() / grid.km_per_deg_lat();
  r.values.resize(grid.size());
  for (int row = 0; row < r.nrows; ++row) {
    const int j = r.nrows - 1 - row;
    for (int i = 0; i < r.ncols; ++i) {
      const std::size_t k = grid.index(i, j);
      const bool ok = valid.empty() || valid[k];
      r.values[static_cast<std::size_t>(row) * r.ncols + i] =
          ok ? field[static_cast<Eigen::Index>(k)] : r.nodata;
    }
  }
  return r;
}

GriddedField gridded_field_from_raster(const AsciiRaster& raster, const Grid& grid,
                                       const std::string& what) {
  if (raster.ncols != grid.nx() || raster.nrows != grid.ny()) {
    throw DataError(what + ": raster is " + std::to_string(raster.ncols) + "x" +
                    std::to_string(raster.nrows) + " but grid is " + std::to_string(grid.nx()) +
                    "x" + std::to_string(grid.ny()));
  }
  GriddedField out;
  out.values.resize(static_cast<Eigen::Index>(grid.size()));
  out.valid.assign(grid.size(), 0);
  for (int row = 0; row < raster.nrows; ++row) {
    const int j = raster.nrows - 1 - row;
    for (int i = 0; i < raster.ncols; ++i) {
      const double v = raster.at(row, i);
      const std::size_t k = grid.index(i, j);
      if (raster.is_nodata(v) || !std::isfinite(v)) {
        out.values[static_cast<Eigen::Index>(k)] = std::numeric_limits<double>::quiet_NaN();
      } else {
        out.values[static_cast<Eigen::Index>(k)] = v;
        out.valid[k] = 1;
      }
    }
  }
  return out;
}

std::vector<WindSample> wind_samples_from_rasters(const AsciiRaster& u, const AsciiRaster& v) {
  if (u.ncols != v.ncols || u.nrows != v.nrows || u.xllcorner != v.xllcorner ||
      u.yllcorner != v.yllcorner || u.cellsize != v.cellsize) {
    throw DataError("wind: u and v rasters are not co-registered");
  }
  std::vector<WindSample> out;
  out.reserve(u.values.size());
  for (int row = 0; row < u.nrows; ++row) {
    for (int col = 0; col < u.ncols; ++col) {
      const double uu = u.at(row, col);
      const double vv = v.at(row, col);
      if (u.is_nodata(uu) || v.is_nodata(vv)) {
        throw DataError("wind: NODATA values are not allowed in wind rasters");
      }
      const double lon = u.xllcorner + (col + 0.5) * u.cellsize;
      const double lat = u.yllcorner + (u.nrows - row - 0.5) * u.cellsize;
      out.push_back({lon, lat, uu, vv});
    }
  }
  return out;
}

std::vector<Facility> parse_emissions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("emissions: empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  auto header = split_csv(line);
  for (auto& h : header) h = trim(h);
  const std::vector<std::string> expected = {"facility_id", "name", "lon", "lat", "so2_tons"};
  if (header != expected) {
    throw DataError("emissions: header must be 'facility_id,name,lon,lat,so2_tons'");
  }
  std::vector<Facility> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cols = split_csv(line);
    if (cols.size() != 5) {
      throw DataError("emissions: line " + std::to_string(line_no) + " has " +
                      std::to_string(cols.size()) + " columns");
    }
    const std::string where = "emissions line " + std::to_string(line_no);
    Facility f;
    f.id = trim(cols[0]);
    f.name = trim(cols[1]);
    f.lon = parse_number(trim(cols[2]), where);
    f.lat = parse_number(trim(cols[3]), where);
    f.so2_tons = parse_number(trim(cols[4]), where);
    if (f.id.empty()) throw DataError(where + ": empty facility_id");
    for (const auto& g : out) {
      if (g.id == f.id) throw DataError(where + ": duplicate facility_id '" + f.id + "'");
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Facility> read_emissions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open emissions file '" + path.string() + "'");
  return parse_emissions_csv(in);
}

void write_emissions_csv(const std::filesystem::path& path, const std::vector<Facility>& facilities) {
  std::ostringstream out;
  out << "facility_id,name,lon,lat,so2_tons\n";
  for (const auto& f : facilities) {
    out << csv_quote(f.id) << ',' << csv_quote(f.name) << ',' << format_double(f.lon) << ','
        << format_double(f.lat) << ',' << format_double(f.so2_tons) << "\n";
  }
  write_text_file(path, out.str());
}

void write_matrix_market(std::ostream& out, const Eigen::SparseMatrix<double>& m) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << "\n";
  for (Eigen::Index c = 0; c < m.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << format_double(it.value()) << "\n";
    }
  }
}

void write_matrix_market(std::ostream& out, const Eigen::MatrixXd& m) {
  out << "%%MatrixMarket matrix array real general\n";
  out << m.rows() << ' ' << m.cols() << "\n";
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) out << format_double(m(r, c)) << "\n";
  }
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << "\n";
}

}  // namespace oufield
