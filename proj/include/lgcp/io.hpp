#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgcp/geometry.hpp"
#include "lgcp/inference.hpp"
#include "lgcp/mesh.hpp"
#include "lgcp/predict.hpp"

namespace lgcp {

// Points from a CSV with a header naming `x` and `y` columns (other columns
// are ignored). Errors name the file and line.
std::vector<Point2> read_points_csv(std::istream& is, const std::string& source = "<stream>");
std::vector<Point2> read_points_csv(const std::filesystem::path& path);

struct NamedPattern {
  std::string name;
  std::vector<Point2> points;
};
// `x,y,pattern` rows.
void write_patterns_csv(std::ostream& os, const std::vector<NamedPattern>& patterns);
std::vector<NamedPattern> read_patterns_csv(std::istream& is, const std::string& source = "<stream>");

// A Polygon, or a Feature / FeatureCollection whose first polygonal feature
// is used. MultiPolygons are accepted when they have a single part.
Polygon polygon_from_geojson(const nlohmann::json& j);
Polygon read_geojson_polygon(const std::filesystem::path& path);
nlohmann::json polygon_to_geojson(const Polygon& p);

void write_esri_ascii(std::ostream& os, const Raster& r);
Raster read_esri_ascii(std::istream& is, const std::string& source = "<stream>");

// Quick-look renderings: a linear colour ramp with a min/max legend, and a
// line plot of an effect curve with its band.
void write_surface_svg(std::ostream& os, const Raster& r, const std::string& title);
void write_curve_csv(std::ostream& os, const EffectCurve& c);
void write_curve_svg(std::ostream& os, const EffectCurve& c);

nlohmann::json summary_to_json(const MarginalSummary& s);

nlohmann::json quality_to_json(const MeshQuality& q);
// Vertices, triangles, per-vertex region markers ("inner"/"outer") and
// quality stats. Above max_triangles only the stats are included and
// `truncated` is true.
nlohmann::json mesh_to_json(const Mesh2d& mesh, std::size_t max_triangles = 200000);

// Binary sidecar with everything sample_posterior needs: per grid point the
// weight, theta, mode and posterior precision, plus the constraints.
// Little-endian, header line "LGFIT v1".
void write_fit_sidecar(std::ostream& os, const FitResult& fit);
FitResult read_fit_sidecar(std::istream& is);

}  // namespace lgcp
