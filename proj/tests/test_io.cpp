#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lgcp/error.hpp"
#include "lgcp/io.hpp"
#include "lgcp/rng.hpp"

using namespace lgcp;

TEST_CASE("points csv") {
  std::istringstream in("id,X,y\n1,0.5,1.5\n2,3,4\n\n3,3,4\n");
  const auto pts = read_points_csv(in);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].x == 0.5);
  CHECK(pts[0].y == 1.5);
  // Duplicates are kept.
  CHECK(pts[1].x == pts[2].x);

  std::istringstream empty("");
  CHECK(read_points_csv(empty).empty());
  std::istringstream header_only("x,y\n");
  CHECK(read_points_csv(header_only).empty());

  std::istringstream bad("x,y\n1,2\n3,abc\n");
  try {
    read_points_csv(bad, "pts.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("pts.csv:3") != std::string::npos);
  }
  std::istringstream ragged("x,y\n1,2,3\n");
  CHECK_THROWS_AS(read_points_csv(ragged), DataError);
  std::istringstream no_y("x,z\n1,2\n");
  CHECK_THROWS_AS(read_points_csv(no_y), DataError);
  std::istringstream nan("x,y\nnan,2\n");
  CHECK_THROWS_AS(read_points_csv(nan), DataError);
}

TEST_CASE("pattern csv round trip") {
  const std::vector<NamedPattern> pats{{"cases", {{1, 2}, {3.25, 4}}}, {"controls", {{0.1, 1e-9}}}};
  std::stringstream ss;
  write_patterns_csv(ss, pats);
  const auto back = read_patterns_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "cases");
  CHECK(back[0].points.size() == 2);
  CHECK(back[1].points[0].y == 1e-9);
}

TEST_CASE("geojson polygons") {
  const auto j = nlohmann::json::parse(R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{},"geometry":{"type":"Point","coordinates":[0,0]}},
    {"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[
      [[0,0],[4,0],[4,4],[0,4],[0,0]], [[1,1],[1,2],[2,2],[2,1],[1,1]]]}}]})");
  const Polygon p = polygon_from_geojson(j);
  CHECK(polygon_area(p) == doctest::Approx(15.0));
  const Polygon q = polygon_from_geojson(polygon_to_geojson(p));
  CHECK(polygon_area(q) == doctest::Approx(15.0));
  CHECK(q.holes.size() == 1);

  CHECK_THROWS_AS(polygon_from_geojson(nlohmann::json::parse(R"({"type":"LineString","coordinates":[]})")), DataError);
  CHECK_THROWS_AS(polygon_from_geojson(nlohmann::json::parse(R"({"type":"Polygon","coordinates":[[[0,0],[1,1]]]})")),
                  DataError);
  // Self-intersecting bow tie.
  CHECK_THROWS_AS(
      polygon_from_geojson(nlohmann::json::parse(R"({"type":"Polygon","coordinates":[[[0,0],[2,2],[2,0],[0,2],[0,0]]]})")),
      DataError);
}

TEST_CASE("esri ascii round trip") {
  Raster r({10, 20}, 0.5, 3, 2, 1.0);
  r.at(0, 1) = 2.5;
  r.at(1, 2) = r.nodata;
  std::stringstream ss;
  write_esri_ascii(ss, r);
  const Raster back = read_esri_ascii(ss);
  CHECK(back.ncols == 3);
  CHECK(back.nrows == 2);
  CHECK(back.origin.x == 10);
  CHECK(back.cell_size == 0.5);
  CHECK(back.at(0, 1) == 2.5);
  CHECK(back.is_nodata(back.at(1, 2)));

  std::istringstream centred("ncols 1\nnrows 1\nxllcenter 1\nyllcenter 1\ncellsize 2\n7\n");
  const Raster c = read_esri_ascii(centred);
  CHECK(c.origin.x == 0);
  CHECK(c.at(0, 0) == 7);
  CHECK(c.nodata == -9999);
  std::istringstream short_body("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1\n");
  CHECK_THROWS_AS(read_esri_ascii(short_body), DataError);
}

TEST_CASE("svg and curve outputs") {
  Raster r({0, 0}, 1, 4, 4, 0.0);
  for (int i = 0; i < 16; ++i) r.values[i] = i;
  r.values[5] = r.nodata;
  std::ostringstream svg;
  write_surface_svg(svg, r, "a<b");
  const std::string s = svg.str();
  CHECK(s.rfind("<svg", 0) == 0);
  CHECK(s.find("a&lt;b") != std::string::npos);
  CHECK(s.find("max 15") != std::string::npos);
  CHECK(s.find("min 0") != std::string::npos);

  EffectCurve c;
  c.component = "dist";
  c.distance = {0, 1, 2};
  c.mean = {0.5, 0.1, -0.2};
  c.lower = {0.1, -0.2, -0.6};
  c.upper = {0.9, 0.4, 0.2};
  std::ostringstream csv;
  write_curve_csv(csv, c);
  CHECK(csv.str().rfind("distance,mean,lower,upper\n0,0.5,", 0) == 0);
  std::ostringstream cs;
  write_curve_svg(cs, c);
  CHECK(cs.str().find("polyline") != std::string::npos);
}

TEST_CASE("fit sidecar round trip") {
  // Two grid points on a 3-dim latent with one sum-to-zero constraint.
  FitResult fit;
  for (int k = 0; k < 2; ++k) {
    LatentGaussian lg;
    lg.mode = Eigen::Vector3d(1.0 + k, -0.5, -0.5 - k);
    std::vector<Triplet> t{{0, 0, 2.0 + k}, {1, 1, 3.0}, {2, 2, 4.0}, {0, 1, -0.5}, {1, 0, -0.5}};
    lg.precision.resize(3, 3);
    lg.precision.setFromTriplets(t.begin(), t.end());
    lg.factor = std::make_shared<SparseCholesky>(lg.precision);
    SpMat a(1, 3);
    a.insert(0, 0) = 1;
    a.insert(0, 1) = 1;
    a.insert(0, 2) = 1;
    fit.latent.push_back(apply_constraints(std::move(lg), a, Eigen::VectorXd::Zero(1)));
    fit.hyper.grid.push_back({{0.1 * k, -0.2}, -3.0 - k, k ? 0.3 : 0.7});
  }
  std::stringstream ss;
  write_fit_sidecar(ss, fit);
  const FitResult back = read_fit_sidecar(ss);
  REQUIRE(back.latent.size() == 2);
  CHECK(back.hyper.grid[1].weight == 0.3);
  CHECK(back.hyper.grid[1].theta[0] == 0.1);
  for (int k = 0; k < 2; ++k) {
    CHECK((back.latent[k].mode - fit.latent[k].mode).norm() < 1e-15);
    CHECK((Eigen::MatrixXd(back.latent[k].precision) - Eigen::MatrixXd(fit.latent[k].precision)).norm() == 0.0);
    CHECK(back.latent[k].constraint_a.nonZeros() == 3);
  }
  const Eigen::MatrixXd d1 = sample_posterior(fit, 50, 11);
  const Eigen::MatrixXd d2 = sample_posterior(back, 50, 11);
  CHECK((d1 - d2).norm() < 1e-12);
  CHECK(d2.row(0).sum() == doctest::Approx(0.0).epsilon(1e-12));

  std::string bytes = ss.str();
  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_fit_sidecar(truncated), DataError);
  std::istringstream wrong("LGFIT v2\n");
  CHECK_THROWS_AS(read_fit_sidecar(wrong), DataError);
}
