#pragma once

#include <limits>
#include <span>
#include <vector>

namespace lgcp {

// Planar coordinates in kilometres.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
  Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
};

double distance(const Point2& a, const Point2& b);
// Twice the signed area of (a, b, c); positive when counter-clockwise.
double orient2d(const Point2& a, const Point2& b, const Point2& c);

// Open vertex list; the closing edge back to the first vertex is implicit.
using Ring = std::vector<Point2>;

// Exterior ring counter-clockwise, holes clockwise. Use make_polygon to build
// one from rings of arbitrary orientation.
struct Polygon {
  Ring exterior;
  std::vector<Ring> holes;
};

struct BBox {
  double xmin = std::numeric_limits<double>::infinity();
  double ymin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();

  void expand(const Point2& p);
  bool contains(const Point2& p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
  bool intersects(const BBox& o) const {
    return !(o.xmin > xmax || o.xmax < xmin || o.ymin > ymax || o.ymax < ymin);
  }
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

double signed_area(const Ring& ring);

// Validates the rings (>= 3 distinct vertices, non-zero area, no
// self-intersections) and fixes their orientation. Throws GeometryError.
Polygon make_polygon(Ring exterior, std::vector<Ring> holes = {});
Polygon make_rectangle(double xmin, double ymin, double xmax, double ymax);

double polygon_area(const Polygon& p);
BBox bbox(const Polygon& p);
BBox bbox(std::span<const Point2> pts);
double perimeter(const Ring& ring);
// Largest distance between two polygon vertices.
double diameter(const Polygon& p);

// Boundary points count as inside, for both the exterior and hole rings.
bool point_in_polygon(const Point2& pt, const Polygon& p);
bool point_in_ring(const Point2& pt, const Ring& ring);

// Intersection as a list of simple parts; empty when disjoint.
std::vector<Polygon> clip_polygon(const Polygon& subject, const Polygon& clip);
double total_area(const std::vector<Polygon>& parts);

// Area of (convex ∩ p) for a convex counter-clockwise ring, by clipping every
// ring of p against the convex one and summing signed areas.
double intersection_area_convex(const Ring& convex, const Polygon& p);

// Minkowski dilation by `distance` with round joins; each quarter turn of a
// join is approximated by `segments_per_quarter` segments. Holes that close
// up are dropped; the largest resulting part is returned.
Polygon dilate(const Polygon& p, double distance, int segments_per_quarter = 8);

// Regular grid, row-major, row 0 at the top (north), as in ESRI ASCII grids.
struct Raster {
  Point2 origin;  // lower-left corner of the grid
  double cell_size = 1.0;
  int ncols = 0;
  int nrows = 0;
  std::vector<double> values;
  double nodata = -9999.0;

  Raster() = default;
  Raster(Point2 origin, double cell_size, int ncols, int nrows, double fill = 0.0);

  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * ncols + col]; }
  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * ncols + col]; }
  Point2 cell_center(int row, int col) const;
  bool is_nodata(double v) const { return v == nodata; }
  BBox extent() const;
  // Throws GeometryError if the invariants do not hold.
  void validate() const;
};

// Raster covering `box` with square cells; ncols x nrows cells spanning the
// longer side exactly.
Raster raster_template(const BBox& box, int ncols, int nrows);

Raster distance_raster(const Point2& source, const Raster& templ);

enum class Interpolation { Nearest, Bilinear };

// Value of the raster at every point. Throws OutOfExtentError naming the
// first point outside the grid. NODATA cells are returned as the sentinel.
std::vector<double> raster_lookup(const Raster& r, std::span<const Point2> pts,
                                  Interpolation mode = Interpolation::Nearest);

}  // namespace lgcp
