#include "lgcp/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lgcp/error.hpp"
#include "lgcp/log.hpp"

namespace lgcp {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) throw DataError(where + ": '" + s + "' is not a number");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::pair<int, std::vector<std::string>>> rows;  // line number, fields
};

CsvTable read_csv(std::istream& is, const std::string& source) {
  CsvTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (t.header.empty()) {
      for (auto& f : fields) f = lower(f);
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    t.rows.emplace_back(lineno, std::move(fields));
  }
  return t;
}

int column(const CsvTable& t, const std::string& name, const std::string& source) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw DataError(source + ":1: missing column '" + name + "'");
  return static_cast<int>(it - t.header.begin());
}

Ring ring_from_json(const nlohmann::json& coords) {
  if (!coords.is_array()) throw DataError("boundary: ring is not an array");
  Ring r;
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
      throw DataError("boundary: coordinate is not a [x, y] pair");
    r.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  // GeoJSON rings repeat the first vertex at the end.
  if (r.size() > 1 && r.front().x == r.back().x && r.front().y == r.back().y) r.pop_back();
  return r;
}

Polygon polygon_from_rings(const nlohmann::json& rings) {
  if (!rings.is_array() || rings.empty()) throw DataError("boundary: polygon has no rings");
  Ring outer = ring_from_json(rings[0]);
  std::vector<Ring> holes;
  for (std::size_t i = 1; i < rings.size(); ++i) holes.push_back(ring_from_json(rings[i]));
  try {
    return make_polygon(std::move(outer), std::move(holes));
  } catch (const GeometryError& e) {
    throw DataError(std::string("boundary: ") + e.what());
  }
}

nlohmann::json ring_to_json(const Ring& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : r) out.push_back({p.x, p.y});
  if (!r.empty()) out.push_back({r.front().x, r.front().y});
  return out;
}

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "sidecar I/O assumes a little-endian host");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("fit sidecar: truncated file");
  return v;
}

void put_sparse(std::ostream& os, SpMat m) {
  m.makeCompressed();
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.nonZeros()));
  for (Eigen::Index k = 0; k <= m.outerSize(); ++k) put<std::int64_t>(os, m.outerIndexPtr()[k]);
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k) put<std::int64_t>(os, m.innerIndexPtr()[k]);
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k) put<double>(os, m.valuePtr()[k]);
}

SpMat get_sparse(std::istream& is) {
  const auto rows = get<std::uint64_t>(is), cols = get<std::uint64_t>(is), nnz = get<std::uint64_t>(is);
  if (rows > (1u << 28) || cols > (1u << 28) || nnz > (1ull << 34)) throw DataError("fit sidecar: implausible matrix size");
  std::vector<std::int64_t> outer(cols + 1), inner(nnz);
  for (auto& v : outer) v = get<std::int64_t>(is);
  for (auto& v : inner) v = get<std::int64_t>(is);
  std::vector<Triplet> trip;
  trip.reserve(nnz);
  for (std::uint64_t c = 0; c < cols; ++c)
    for (std::int64_t k = outer[c]; k < outer[c + 1]; ++k) {
      if (k < 0 || static_cast<std::uint64_t>(k) >= nnz || inner[k] < 0 || static_cast<std::uint64_t>(inner[k]) >= rows)
        throw DataError("fit sidecar: corrupt sparse matrix");
      trip.emplace_back(static_cast<int>(inner[k]), static_cast<int>(c), 0.0);
    }
  SpMat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<double> vals(nnz);
  for (auto& v : vals) v = get<double>(is);
  for (std::size_t k = 0; k < trip.size(); ++k) trip[k] = Triplet(trip[k].row(), trip[k].col(), vals[k]);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
  for (double x : v) put<double>(os, x);
}

Eigen::VectorXd get_vector(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1u << 28)) throw DataError("fit sidecar: implausible vector size");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = get<double>(is);
  return v;
}

// Viridis-like ramp through five anchors.
std::string ramp(double t) {
  static const double anchors[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(anchors[i][0] + f * (anchors[i + 1][0] - anchors[i][0])),
                static_cast<int>(anchors[i][1] + f * (anchors[i + 1][1] - anchors[i][1])),
                static_cast<int>(anchors[i][2] + f * (anchors[i + 1][2] - anchors[i][2])));
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<Point2> read_points_csv(std::istream& is, const std::string& source) {
  const CsvTable t = read_csv(is, source);
  if (t.header.empty()) {
    logger()->warn("{}: empty file, no points read", source);
    return {};
  }
  const int cx = column(t, "x", source), cy = column(t, "y", source);
  std::vector<Point2> out;
  out.reserve(t.rows.size());
  for (const auto& [line, f] : t.rows) {
    const std::string where = source + ":" + std::to_string(line);
    out.push_back({parse_number(f[cx], where), parse_number(f[cy], where)});
  }
  return out;
}

std::vector<Point2> read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_points_csv(in, path.string());
}

void write_patterns_csv(std::ostream& os, const std::vector<NamedPattern>& patterns) {
  os << "x,y,pattern\n" << std::setprecision(17);
  for (const auto& p : patterns)
    for (const auto& pt : p.points) os << pt.x << ',' << pt.y << ',' << p.name << '\n';
}

std::vector<NamedPattern> read_patterns_csv(std::istream& is, const std::string& source) {
  const CsvTable t = read_csv(is, source);
  if (t.header.empty()) return {};
  const int cx = column(t, "x", source), cy = column(t, "y", source), cp = column(t, "pattern", source);
  std::vector<NamedPattern> out;
  for (const auto& [line, f] : t.rows) {
    const std::string where = source + ":" + std::to_string(line);
    auto it = std::find_if(out.begin(), out.end(), [&](const NamedPattern& p) { return p.name == f[cp]; });
    if (it == out.end()) it = out.insert(out.end(), NamedPattern{f[cp], {}});
    it->points.push_back({parse_number(f[cx], where), parse_number(f[cy], where)});
  }
  return out;
}

Polygon polygon_from_geojson(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw DataError("boundary: not a GeoJSON object");
  const std::string type = j["type"];
  if (type == "Polygon") {
    if (!j.contains("coordinates")) throw DataError("boundary: Polygon without coordinates");
    return polygon_from_rings(j["coordinates"]);
  }
  if (type == "MultiPolygon") {
    if (!j.contains("coordinates") || !j["coordinates"].is_array() || j["coordinates"].size() != 1)
      throw DataError("boundary: only single-part MultiPolygons are supported");
    return polygon_from_rings(j["coordinates"][0]);
  }
  if (type == "Feature") {
    if (!j.contains("geometry")) throw DataError("boundary: Feature without geometry");
    return polygon_from_geojson(j["geometry"]);
  }
  if (type == "FeatureCollection") {
    if (!j.contains("features") || !j["features"].is_array()) throw DataError("boundary: FeatureCollection without features");
    for (const auto& f : j["features"]) {
      const auto& g = f.value("geometry", nlohmann::json());
      if (g.is_object() && (g.value("type", "") == "Polygon" || g.value("type", "") == "MultiPolygon"))
        return polygon_from_geojson(g);
    }
    throw DataError("boundary: FeatureCollection has no polygon");
  }
  throw DataError("boundary: unsupported GeoJSON type '" + type + "'");
}

Polygon read_geojson_polygon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return polygon_from_geojson(j);
}

nlohmann::json polygon_to_geojson(const Polygon& p) {
  nlohmann::json rings = nlohmann::json::array();
  rings.push_back(ring_to_json(p.exterior));
  for (const auto& h : p.holes) rings.push_back(ring_to_json(h));
  return {{"type", "Polygon"}, {"coordinates", rings}};
}

void write_esri_ascii(std::ostream& os, const Raster& r) {
  os << std::setprecision(17);
  os << "ncols " << r.ncols << "\nnrows " << r.nrows << "\nxllcorner " << r.origin.x << "\nyllcorner " << r.origin.y
     << "\ncellsize " << r.cell_size << "\nNODATA_value " << r.nodata << "\n";
  os << std::setprecision(10);
  for (int i = 0; i < r.nrows; ++i) {
    for (int j = 0; j < r.ncols; ++j) os << (j ? " " : "") << r.at(i, j);
    os << '\n';
  }
}

Raster read_esri_ascii(std::istream& is, const std::string& source) {
  Raster r;
  bool xll = false, yll = false, centre = false;
  std::string key;
  // Header keys in any order; the first numeric token starts the cell values.
  while ((is >> std::ws) && std::isalpha(is.peek())) {
    is >> key;
    const std::string k = lower(key);
    if (k == "ncols") is >> r.ncols;
    else if (k == "nrows") is >> r.nrows;
    else if (k == "xllcorner") xll = static_cast<bool>(is >> r.origin.x);
    else if (k == "yllcorner") yll = static_cast<bool>(is >> r.origin.y);
    else if (k == "xllcenter") centre = xll = static_cast<bool>(is >> r.origin.x);
    else if (k == "yllcenter") centre = yll = static_cast<bool>(is >> r.origin.y);
    else if (k == "cellsize") is >> r.cell_size;
    else if (k == "nodata_value") is >> r.nodata;
    else throw DataError(source + ": unexpected header key '" + key + "'");
    if (!is) throw DataError(source + ": bad value for '" + key + "'");
  }
  is.clear();
  if (r.ncols <= 0 || r.nrows <= 0 || !(r.cell_size > 0) || !xll || !yll)
    throw DataError(source + ": incomplete ESRI ASCII header");
  if (centre) {
    r.origin.x -= 0.5 * r.cell_size;
    r.origin.y -= 0.5 * r.cell_size;
  }
  r.values.resize(static_cast<std::size_t>(r.ncols) * r.nrows);
  for (auto& v : r.values)
    if (!(is >> v)) throw DataError(source + ": expected " + std::to_string(r.values.size()) + " cell values");
  return r;
}

void write_surface_svg(std::ostream& os, const Raster& r, const std::string& title) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : r.values)
    if (!r.is_nodata(v) && std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const int px = std::max(1, 512 / std::max(r.ncols, r.nrows));
  const int w = r.ncols * px, h = r.nrows * px;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w + 120 << "\" height=\"" << h + 40 << "\">\n";
  os << "<text x=\"4\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  os << "<g transform=\"translate(0,24)\" shape-rendering=\"crispEdges\">\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (int i = 0; i < r.nrows; ++i)
    for (int j = 0; j < r.ncols; ++j) {
      const double v = r.at(i, j);
      if (r.is_nodata(v) || !std::isfinite(v)) continue;
      os << "<rect x=\"" << j * px << "\" y=\"" << i * px << "\" width=\"" << px << "\" height=\"" << px
         << "\" fill=\"" << ramp((v - lo) / span) << "\"/>\n";
    }
  os << "</g>\n";
  // Legend: ramp bar with min and max labels.
  const int lx = w + 16;
  for (int k = 0; k < 100; ++k)
    os << "<rect x=\"" << lx << "\" y=\"" << 24 + (99 - k) * h / 100.0 << "\" width=\"16\" height=\"" << h / 100.0 + 0.5
       << "\" fill=\"" << ramp(k / 99.0) << "\"/>\n";
  os << std::setprecision(4);
  os << "<text x=\"" << lx + 20 << "\" y=\"" << 34 << "\" font-family=\"sans-serif\" font-size=\"11\">max "
     << (std::isfinite(hi) ? hi : 0.0) << "</text>\n";
  os << "<text x=\"" << lx + 20 << "\" y=\"" << 24 + h << "\" font-family=\"sans-serif\" font-size=\"11\">min "
     << (std::isfinite(lo) ? lo : 0.0) << "</text>\n";
  os << "</svg>\n";
}

void write_curve_csv(std::ostream& os, const EffectCurve& c) {
  os << "distance,mean,lower,upper\n" << std::setprecision(17);
  for (std::size_t i = 0; i < c.distance.size(); ++i)
    os << c.distance[i] << ',' << c.mean[i] << ',' << c.lower[i] << ',' << c.upper[i] << '\n';
}

void write_curve_svg(std::ostream& os, const EffectCurve& c) {
  const double w = 480, h = 300, m = 40;
  double y0 = 0.0, y1 = 0.0;
  for (std::size_t i = 0; i < c.distance.size(); ++i) {
    y0 = std::min(y0, c.lower[i]);
    y1 = std::max(y1, c.upper[i]);
  }
  if (y1 <= y0) y1 = y0 + 1;
  const double x0 = c.distance.empty() ? 0 : c.distance.front();
  const double x1 = c.distance.empty() || c.distance.back() <= x0 ? x0 + 1 : c.distance.back();
  auto sx = [&](double x) { return m + (x - x0) / (x1 - x0) * (w - 2 * m); };
  auto sy = [&](double y) { return h - m - (y - y0) / (y1 - y0) * (h - 2 * m); };
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<text x=\"" << m << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << xml_escape(c.component)
     << " effect by distance (km)</text>\n";
  os << "<polygon fill=\"#9ecae1\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < c.distance.size(); ++i) os << sx(c.distance[i]) << ',' << sy(c.upper[i]) << ' ';
  for (std::size_t i = c.distance.size(); i-- > 0;) os << sx(c.distance[i]) << ',' << sy(c.lower[i]) << ' ';
  os << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < c.distance.size(); ++i) os << sx(c.distance[i]) << ',' << sy(c.mean[i]) << ' ';
  os << "\"/>\n";
  os << "<line x1=\"" << m << "\" x2=\"" << w - m << "\" y1=\"" << sy(0) << "\" y2=\"" << sy(0)
     << "\" stroke=\"#444\" stroke-dasharray=\"4 3\"/>\n";
  os << "<text x=\"" << m << "\" y=\"" << h - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">" << x0
     << "</text>\n<text x=\"" << w - m << "\" y=\"" << h - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">" << x1
     << "</text>\n<text x=\"4\" y=\"" << sy(y1) + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">" << y1
     << "</text>\n<text x=\"4\" y=\"" << sy(y0) << "\" font-family=\"sans-serif\" font-size=\"11\">" << y0
     << "</text>\n</svg>\n";
}

nlohmann::json summary_to_json(const MarginalSummary& s) {
  return {{"name", s.name}, {"mean", s.mean}, {"sd", s.sd}, {"q025", s.q025}, {"q50", s.q50}, {"q975", s.q975}};
}

nlohmann::json quality_to_json(const MeshQuality& q) {
  return {{"vertices", q.num_vertices},      {"triangles", q.num_triangles},
          {"min_angle", q.min_angle},        {"max_inner_edge", q.max_inner_edge},
          {"max_outer_edge", q.max_outer_edge}, {"min_vertex_distance", q.min_vertex_distance},
          {"area", q.area}};
}

nlohmann::json mesh_to_json(const Mesh2d& mesh, std::size_t max_triangles) {
  nlohmann::json out;
  out["stats"] = quality_to_json(mesh_quality(mesh));
  const bool truncated = mesh.triangles.size() > max_triangles;
  out["truncated"] = truncated;
  if (truncated) return out;
  auto& v = out["vertices"] = nlohmann::json::array();
  for (const auto& p : mesh.vertices) v.push_back({p.x, p.y});
  auto& t = out["triangles"] = nlohmann::json::array();
  for (const auto& tri : mesh.triangles) t.push_back({tri[0], tri[1], tri[2]});
  auto& m = out["markers"] = nlohmann::json::array();
  for (const auto r : mesh.markers) m.push_back(r == Region::Inner ? "inner" : "outer");
  return out;
}

void write_fit_sidecar(std::ostream& os, const FitResult& fit) {
  os << "LGFIT v1\n";
  put<std::uint32_t>(os, static_cast<std::uint32_t>(fit.latent.size()));
  for (std::size_t k = 0; k < fit.latent.size(); ++k) {
    const auto& lg = fit.latent[k];
    const HyperPoint& hp = fit.hyper.grid.at(k);
    put<double>(os, hp.weight);
    put<double>(os, hp.log_density);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(hp.theta.size()));
    for (double t : hp.theta) put<double>(os, t);
    put_vector(os, lg.mode);
    put_sparse(os, lg.precision);
  }
  const auto& first = fit.latent.front();
  put_sparse(os, first.constraint_a.rows() ? first.constraint_a : SpMat(0, first.mode.size()));
  put_vector(os, first.constraint_e.size() ? first.constraint_e : Eigen::VectorXd(0));
}

FitResult read_fit_sidecar(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header != "LGFIT v1") throw DataError("fit sidecar: missing 'LGFIT v1' header");
  FitResult fit;
  const auto n = get<std::uint32_t>(is);
  if (n == 0 || n > 10000) throw DataError("fit sidecar: implausible grid size");
  for (std::uint32_t k = 0; k < n; ++k) {
    HyperPoint hp;
    hp.weight = get<double>(is);
    hp.log_density = get<double>(is);
    const auto nt = get<std::uint32_t>(is);
    if (nt > 1000) throw DataError("fit sidecar: implausible hyperparameter count");
    for (std::uint32_t i = 0; i < nt; ++i) hp.theta.push_back(get<double>(is));
    LatentGaussian lg;
    lg.mode = get_vector(is);
    lg.precision = get_sparse(is);
    if (lg.precision.rows() != lg.mode.size() || lg.precision.cols() != lg.mode.size())
      throw DataError("fit sidecar: precision does not match the mode");
    lg.factor = std::make_shared<SparseCholesky>(lg.precision);
    fit.hyper.grid.push_back(hp);
    fit.latent.push_back(std::move(lg));
  }
  const SpMat a = get_sparse(is);
  const Eigen::VectorXd e = get_vector(is);
  if (a.rows() != e.size()) throw DataError("fit sidecar: constraint sizes differ");
  for (auto& lg : fit.latent) {
    if (a.cols() != lg.mode.size()) throw DataError("fit sidecar: constraint width does not match the mode");
    lg = apply_constraints(std::move(lg), a, e);
  }
  fit.hyper.mode = fit.hyper.grid.front().theta;
  return fit;
}

}  // namespace lgcp
