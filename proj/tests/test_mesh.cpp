#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "lgcp/error.hpp"
#include "lgcp/mesh.hpp"
#include "lgcp/rng.hpp"

using namespace lgcp;

namespace {

MeshParams square_params() {
  MeshParams p;
  p.cutoff = 0.05;
  p.max_edge = {0.2, 0.4};
  p.offset = {0.2, 0.5};
  return p;
}

Mesh2d right_triangle_mesh() {
  Mesh2d m;
  m.vertices = {{0, 0}, {1, 0}, {0, 1}};
  m.triangles = {{0, 1, 2}};
  m.markers = {Region::Inner, Region::Inner, Region::Inner};
  return m;
}

double total_mesh_area(const Mesh2d& m) {
  double a = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) a += triangle_area(m, t);
  return a;
}

void check_mesh_invariants(const Mesh2d& m, const Polygon& boundary) {
  const MeshQuality q = mesh_quality(m);
  CHECK(q.min_angle >= m.params.min_angle - 1e-9);
  CHECK(q.max_inner_edge <= m.params.max_edge[0] + 1e-9);
  CHECK(q.max_outer_edge <= m.params.max_edge[1] + 1e-9);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles[t];
    CHECK(orient2d(m.vertices[tri[0]], m.vertices[tri[1]], m.vertices[tri[2]]) > 0);
  }
  // The boundary polygon is entirely covered.
  const TriangleLocator loc(m);
  for (const Point2& v : boundary.exterior) CHECK(loc.locate(v).has_value());
  const BBox b = bbox(boundary);
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Point2 p{rng.uniform(b.xmin, b.xmax), rng.uniform(b.ymin, b.ymax)};
    if (point_in_polygon(p, boundary)) CHECK(loc.locate(p).has_value());
  }
}

// Irregular non-convex outline of roughly 20 x 20 km.
Polygon irregular_boundary() {
  return make_polygon({{0, 2},
                       {6, 0},
                       {12, 1.5},
                       {18, 0.5},
                       {21, 6},
                       {19, 12},
                       {21, 18},
                       {15, 21},
                       {10, 17},
                       {5, 20},
                       {0.5, 15},
                       {3, 9}});
}

}  // namespace

TEST_CASE("unit square mesh covers the extended square") {
  const Polygon sq = make_rectangle(0, 0, 1, 1);
  const MeshParams p = square_params();
  const Mesh2d m = build_mesh_2d(sq, p);
  CHECK(m.params == p);
  check_mesh_invariants(m, sq);
  const double extended = polygon_area(dilate(sq, p.offset[1]));
  CHECK(total_mesh_area(m) >= extended - 1e-6);
  // Inner vertices lie within the near band.
  const Polygon inner = dilate(sq, p.offset[0]);
  for (int i = 0; i < m.num_vertices(); ++i)
    if (m.markers[i] == Region::Inner) CHECK(point_in_polygon(m.vertices[i], dilate(inner, 1e-6)));
}

TEST_CASE("irregular boundary with the default parameters") {
  const Polygon b = irregular_boundary();
  const Mesh2d m = build_mesh_2d(b, MeshParams{});
  check_mesh_invariants(m, b);
  CHECK(mesh_quality(m).max_inner_edge <= 0.6 + 1e-9);
  CHECK(m.num_vertices() > 500);
}

TEST_CASE("doubling the cutoff does not add vertices") {
  const Polygon b = irregular_boundary();
  MeshParams p;
  p.max_edge = {1.0, 2.0};
  for (double cutoff : {0.1, 0.2, 0.4}) {
    p.cutoff = cutoff;
    const int n1 = build_mesh_2d(b, p).num_vertices();
    p.cutoff = 2 * cutoff;
    const int n2 = build_mesh_2d(b, p).num_vertices();
    CHECK(n2 <= n1);
  }
}

TEST_CASE("refinement is deterministic") {
  const Polygon b = irregular_boundary();
  MeshParams p;
  p.max_edge = {1.0, 2.0};
  const Mesh2d a = build_mesh_2d(b, p);
  const Mesh2d c = build_mesh_2d(b, p);
  CHECK(a.vertices == c.vertices);
  CHECK(a.triangles == c.triangles);
  CHECK(a.markers == c.markers);
}

TEST_CASE("invalid mesh parameters are rejected") {
  const Polygon sq = make_rectangle(0, 0, 1, 1);
  MeshParams p = square_params();
  p.cutoff = 0;
  CHECK_THROWS_AS(build_mesh_2d(sq, p), ConfigError);
  p = square_params();
  p.max_edge = {0.5, 0.2};
  CHECK_THROWS_AS(build_mesh_2d(sq, p), ConfigError);
  p = square_params();
  p.min_angle = 35;
  CHECK_THROWS_AS(build_mesh_2d(sq, p), ConfigError);
}

TEST_CASE("refinement respects the deadline") {
  MeshParams p = square_params();
  p.max_edge = {0.005, 0.01};
  p.cutoff = 0.001;
  MeshBuildOptions opts;
  opts.deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(50);
  CHECK_THROWS_AS(build_mesh_2d(make_rectangle(0, 0, 1, 1), p, opts), MeshTimeout);
}

TEST_CASE("basis_eval examples") {
  const Mesh2d m = build_mesh_2d(make_rectangle(0, 0, 1, 1), square_params());
  const int t = m.num_triangles() / 2;
  const auto& tri = m.triangles[t];
  const Point2 a = m.vertices[tri[0]], b = m.vertices[tri[1]], c = m.vertices[tri[2]];
  const std::vector<Point2> pts = {a, (a + b + c) * (1.0 / 3.0), (a + b) * 0.5};
  const Eigen::MatrixXd dense = Eigen::MatrixXd(basis_eval(m, pts));
  CHECK(dense(0, tri[0]) == doctest::Approx(1.0));
  CHECK(dense.row(0).cwiseAbs().sum() == doctest::Approx(1.0));
  for (int k = 0; k < 3; ++k) CHECK(dense(1, tri[k]) == doctest::Approx(1.0 / 3.0));
  CHECK(dense(2, tri[0]) == doctest::Approx(0.5));
  CHECK(dense(2, tri[1]) == doctest::Approx(0.5));
}

TEST_CASE("basis_eval rows are barycentric weights") {
  const Mesh2d m = build_mesh_2d(make_rectangle(0, 0, 1, 1), square_params());
  Rng rng(9);
  std::vector<Point2> pts;
  for (int i = 0; i < 2000; ++i) pts.push_back({rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2)});
  const SpMat a = basis_eval(m, pts);
  const SpMat at = a.transpose();
  for (int i = 0; i < at.outerSize(); ++i) {
    double sum = 0.0;
    int nnz = 0;
    Point2 recon{0, 0};
    for (SpMat::InnerIterator it(at, i); it; ++it) {
      CHECK(it.value() >= 0.0);
      sum += it.value();
      ++nnz;
      recon = recon + m.vertices[it.row()] * it.value();
    }
    CHECK(nnz <= 3);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(distance(recon, pts[i]) <= 1e-9);
  }
}

TEST_CASE("uncovered points raise a coverage error with their index") {
  const Mesh2d m = right_triangle_mesh();
  const std::vector<Point2> pts = {{0.2, 0.2}, {0.1, 0.1}, {2, 2}};
  try {
    basis_eval(m, pts);
    FAIL("expected CoverageError");
  } catch (const CoverageError& e) {
    CHECK(e.index() == 2);
  }
}

TEST_CASE("FEM matrices on a single right triangle") {
  const FemMatrices fem = assemble_fem(right_triangle_mesh());
  Eigen::Matrix3d expected;
  expected << 2, -1, -1, -1, 1, 0, -1, 0, 1;
  expected *= 0.5;
  const Eigen::MatrixXd g = Eigen::MatrixXd(fem.g);
  CHECK((g - expected).cwiseAbs().maxCoeff() < 1e-14);
  for (int k = 0; k < 3; ++k) CHECK(fem.c_diag[k] == doctest::Approx(1.0 / 6.0));

  // Quadrature oracle: gradients by central differences of the basis,
  // integrated with a midpoint rule over a sub-triangulation.
  const Mesh2d m = right_triangle_mesh();
  const int n = 40;
  const double h = 1e-6;
  Eigen::Matrix3d quad = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i)
    for (int j = 0; i + j < n; ++j) {
      const Point2 p{(i + 1.0 / 3.0) / n, (j + 1.0 / 3.0) / n};
      const std::vector<Point2> probe = {{p.x + h, p.y}, {p.x - h, p.y}, {p.x, p.y + h}, {p.x, p.y - h}};
      const Eigen::MatrixXd v = Eigen::MatrixXd(basis_eval(m, probe));
      const Eigen::Vector3d gx = (v.row(0) - v.row(1)).transpose() / (2 * h);
      const Eigen::Vector3d gy = (v.row(2) - v.row(3)).transpose() / (2 * h);
      quad += (gx * gx.transpose() + gy * gy.transpose()) * (0.5 / (n * n));
    }
  // Only the lower-left sub-triangles are sampled; they hold (n + 1) / 2n of
  // the area and the gradients are constant.
  CHECK((quad * (2.0 * n / (n + 1)) - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("FEM invariants on a generated mesh") {
  const Mesh2d m = build_mesh_2d(irregular_boundary(), MeshParams{1.0, {1.5, 3.0}});
  const FemMatrices fem = assemble_fem(m);
  CHECK(fem.c_diag.sum() == doctest::Approx(total_mesh_area(m)).epsilon(1e-9));
  CHECK(fem.c_diag.minCoeff() > 0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m.num_vertices());
  const double gmax = Eigen::MatrixXd(fem.g).cwiseAbs().maxCoeff();
  CHECK((fem.g * ones).cwiseAbs().maxCoeff() < 1e-9 * gmax);
  const SpMat gt = fem.g.transpose();
  CHECK((fem.g - gt).norm() < 1e-12 * fem.g.norm());
  const SpMat g2t = fem.g2.transpose();
  CHECK((fem.g2 - g2t).norm() < 1e-12 * fem.g2.norm());
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd x(m.num_vertices());
    for (auto& v : x) v = rng.normal();
    CHECK(x.dot(fem.g * x) >= -1e-10);
    CHECK(x.dot(fem.g2 * x) >= -1e-10);
  }
}

TEST_CASE("degenerate triangles are rejected by assembly") {
  Mesh2d m;
  m.vertices = {{0, 0}, {1, 0}, {2, 0}};
  m.triangles = {{0, 1, 2}};
  m.markers = {Region::Inner, Region::Inner, Region::Inner};
  CHECK_THROWS_AS(assemble_fem(m), NumericalError);
}

TEST_CASE("mesh file round trip") {
  const Mesh2d m = build_mesh_2d(make_rectangle(0, 0, 1, 1), square_params());
  std::stringstream ss;
  write_mesh(ss, m);
  CHECK(ss.str().rfind("MESH2D v1", 0) == 0);
  const Mesh2d back = read_mesh(ss);
  CHECK(back.vertices == m.vertices);
  CHECK(back.triangles == m.triangles);
  CHECK(back.markers == m.markers);
  CHECK(back.params == m.params);

  std::stringstream bad("MESH2D v9\n");
  CHECK_THROWS_AS(read_mesh(bad), DataError);
}

TEST_CASE("build_mesh_1d examples") {
  const Mesh1d m = build_mesh_1d(0, 10, 20, 2);
  REQUIRE(m.knots.size() == 20);
  const double step = 10.0 / 19.0;
  for (std::size_t i = 1; i < m.knots.size(); ++i)
    CHECK(std::abs(m.knots[i] - m.knots[i - 1] - step) <= 1e-12 * step);
  const Mesh1d two = build_mesh_1d(0, 1, 2, 1);
  CHECK(two.knots == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(build_mesh_1d(1, 0, 5, 1), ConfigError);
  CHECK_THROWS_AS(build_mesh_1d(0, 1, 1, 1), ConfigError);
}

TEST_CASE("basis_eval_1d examples") {
  const Mesh1d m = build_mesh_1d(0, 4, 5, 1);
  const std::vector<double> vals = {2.0, 2.5};
  const Eigen::MatrixXd a = Eigen::MatrixXd(basis_eval_1d(m, vals).a);
  CHECK(a(0, 2) == doctest::Approx(1.0));
  CHECK(a.row(0).sum() == doctest::Approx(1.0));
  CHECK(a(1, 2) == doctest::Approx(0.5));
  CHECK(a(1, 3) == doctest::Approx(0.5));

  const Mesh1d q = build_mesh_1d(0, 7, 20, 2);
  Rng rng(2);
  std::vector<double> xs;
  for (int i = 0; i < 1000; ++i) xs.push_back(rng.uniform(0, 7));
  xs.push_back(0.0);
  xs.push_back(7.0);
  const Basis1d b = basis_eval_1d(q, xs);
  CHECK(b.clamped.empty());
  const Eigen::MatrixXd d = Eigen::MatrixXd(b.a);
  CHECK(d.cols() == q.num_basis());
  for (int i = 0; i < d.rows(); ++i) {
    CHECK(std::abs(d.row(i).sum() - 1.0) <= 1e-12);
    CHECK(d.row(i).minCoeff() >= 0.0);
  }
  // Clamped ends interpolate the end coefficients.
  CHECK(d(1000, 0) == doctest::Approx(1.0));
  CHECK(d(1001, q.num_basis() - 1) == doctest::Approx(1.0));

  const std::vector<double> outside = {-1.0, 3.0, 9.0};
  const Basis1d c = basis_eval_1d(q, outside);
  CHECK(c.clamped == std::vector<int>{0, 2});
}

TEST_CASE("fem_1d examples") {
  const FemMatrices f = fem_1d(build_mesh_1d(0, 1, 2, 1));
  Eigen::Matrix2d expected;
  expected << 1, -1, -1, 1;
  CHECK((Eigen::MatrixXd(f.g) - expected).cwiseAbs().maxCoeff() < 1e-14);

  const double h = 0.25;
  const FemMatrices u = fem_1d(build_mesh_1d(0, 2, 9, 1));
  CHECK(u.c_diag[4] == doctest::Approx(h));
  CHECK(u.c_diag[0] == doctest::Approx(h / 2));
  CHECK(u.c_diag.sum() == doctest::Approx(2.0));

  for (int degree : {1, 2}) {
    const FemMatrices fq = fem_1d(build_mesh_1d(-1, 5, 12, degree));
    CHECK(fq.c_diag.sum() == doctest::Approx(6.0).epsilon(1e-12));
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(fq.c_diag.size());
    CHECK((fq.g * ones).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((fq.g2 * ones).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("quadratic stiffness matches an independent quadrature") {
  // Derivatives by finite differences of the basis, Simpson rule per interval.
  const Mesh1d m = build_mesh_1d(0, 3, 4, 2);
  const FemMatrices f = fem_1d(m);
  const int nb = m.num_basis();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nb, nb);
  const int n = 600;
  const double dx = 3.0 / n, h = 1e-6;
  for (int i = 0; i <= n; ++i) {
    const double x = std::clamp(i * dx, h, 3.0 - h);
    const Eigen::VectorXd d = (bspline_row(m, x + h) - bspline_row(m, x - h)) / (2 * h);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    g += w * dx / 3.0 * d * d.transpose();
  }
  CHECK((g - Eigen::MatrixXd(f.g)).cwiseAbs().maxCoeff() < 1e-4);
}
