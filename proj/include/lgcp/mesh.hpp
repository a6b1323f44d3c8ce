#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgcp/geometry.hpp"
#include "lgcp/sparse_cholesky.hpp"

namespace lgcp {

enum class Region : std::uint8_t { Inner = 0, Outer = 1 };

struct MeshParams {
  double cutoff = 0.4;
  std::array<double, 2> max_edge{0.6, 1.2};
  double min_angle = 27.0;  // degrees
  std::array<double, 2> offset{0.5, 2.0};
  std::array<int, 2> n_initial{16, 16};

  friend bool operator==(const MeshParams&, const MeshParams&) = default;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct Mesh2d {
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<Region> markers;                // per vertex
  MeshParams params;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  // Inner when any vertex carries the inner marker.
  Region triangle_region(int t) const;
};

struct MeshQuality {
  int num_vertices = 0;
  int num_triangles = 0;
  double min_angle = 0.0;       // degrees, over all triangles
  double max_inner_edge = 0.0;  // over inner-region triangles
  double max_outer_edge = 0.0;
  double min_vertex_distance = 0.0;
  double area = 0.0;
};

struct MeshBuildOptions {
  // Refinement aborts with MeshTimeout once this instant has passed.
  std::optional<std::chrono::steady_clock::time_point> deadline;
  // Hard cap on inserted vertices; 0 picks a bound from the domain area.
  std::size_t max_vertices = 0;
};

// Delaunay refinement of the region covering `boundary` dilated by
// params.offset[1]. Vertices inside the boundary dilated by params.offset[0]
// are marked Inner and their triangles obey max_edge[0]; the rest obey
// max_edge[1]. Every triangle meets the min_angle bound.
Mesh2d build_mesh_2d(const Polygon& boundary, const MeshParams& params, const MeshBuildOptions& opts = {});

MeshQuality mesh_quality(const Mesh2d& mesh);
double triangle_area(const Mesh2d& mesh, int t);
double min_triangle_angle(const Point2& a, const Point2& b, const Point2& c);  // degrees

// Bucket grid for point location; immutable after construction.
class TriangleLocator {
 public:
  explicit TriangleLocator(const Mesh2d& mesh);
  // Containing triangle and barycentric weights, or nullopt when uncovered.
  // Points on shared edges go to the lowest-index triangle.
  std::optional<std::pair<int, std::array<double, 3>>> locate(const Point2& p) const;
  const Mesh2d& mesh() const { return *mesh_; }

 private:
  const Mesh2d* mesh_;
  BBox box_;
  double cell_ = 1.0;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> buckets_;
};

// Rows hold the barycentric weights of each point. Throws CoverageError with
// the index of the first uncovered point.
SpMat basis_eval(const Mesh2d& mesh, std::span<const Point2> pts);
SpMat basis_eval(const TriangleLocator& locator, std::span<const Point2> pts);

struct FemMatrices {
  SpMat c;   // lumped mass, diagonal
  SpMat g;   // stiffness
  SpMat g2;  // G C^{-1} G
  Eigen::VectorXd c_diag;
};

FemMatrices assemble_fem(const Mesh2d& mesh);

// Text serialization, header line "MESH2D v1".
void write_mesh(std::ostream& os, const Mesh2d& mesh);
Mesh2d read_mesh(std::istream& is);

// ---------------------------------------------------------------------------
// One-dimensional meshes for effects of a scalar covariate.

struct Mesh1d {
  std::vector<double> knots;
  int degree = 1;  // 1 (hat functions) or 2 (clamped quadratic B-splines)

  // degree 1: one function per knot; degree 2: knots + 1 functions.
  int num_basis() const { return degree == 1 ? static_cast<int>(knots.size()) : static_cast<int>(knots.size()) + 1; }
  double lower() const { return knots.front(); }
  double upper() const { return knots.back(); }
};

Mesh1d build_mesh_1d(double from, double to, int n_knots, int degree);

struct Basis1d {
  SpMat a;
  // Indices of input values that fell outside the knot range and were clamped.
  std::vector<int> clamped;
};

Basis1d basis_eval_1d(const Mesh1d& mesh, std::span<const double> values);
// B-spline values at a single point (dense, length num_basis()).
Eigen::VectorXd bspline_row(const Mesh1d& mesh, double value);

FemMatrices fem_1d(const Mesh1d& mesh);

}  // namespace lgcp
