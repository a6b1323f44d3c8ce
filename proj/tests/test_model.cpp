#include <algorithm>
#include <cmath>
#include <numbers>
#include <memory>

#include "doctest.h"
#include "lgcp/error.hpp"
#include "lgcp/model.hpp"
#include "lgcp/rng.hpp"

using namespace lgcp;

namespace {

std::shared_ptr<const Mesh2d> square_mesh() {
  static const auto mesh = [] {
    MeshParams p;
    p.cutoff = 0.2;
    p.max_edge = {1.0, 3.0};
    p.offset = {1.0, 4.0};
    return std::make_shared<const Mesh2d>(build_mesh_2d(make_rectangle(0, 0, 10, 10), p));
  }();
  return mesh;
}

PcPrior default_prior() {
  PcPrior p;
  p.r0 = 10;
  p.alpha_r = 0.99;
  p.sigma0 = 1;
  p.alpha_sigma = 0.01;
  return p;
}

std::vector<Point2> uniform_points(Rng& rng, int n, double xmin, double ymin, double xmax, double ymax) {
  std::vector<Point2> pts;
  for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)});
  return pts;
}

// Two patterns with intercepts, a shared field and a case-only field.
ModelSpec case_control_model(std::uint64_t seed) {
  Rng rng(seed);
  const auto mesh = square_mesh();
  const auto spde = std::make_shared<const SpdeModel>(spde_model(*mesh, default_prior()));
  std::vector<ComponentDef> comps = {ComponentDef::intercept("a0"), ComponentDef::intercept("a1"),
                                     ComponentDef::field("shared", spde), ComponentDef::field("specific", spde)};
  std::vector<LikelihoodDef> liks = {
      {"controls", uniform_points(rng, 60, 0, 0, 10, 10), make_rectangle(0, 0, 10, 10), {"a0", "shared"}},
      {"cases", uniform_points(rng, 25, 2, 2, 8, 8), make_rectangle(0, 0, 10, 10), {"a1", "shared", "specific"}}};
  return ModelSpec(mesh, comps, liks);
}

double weight_sum(const IntegrationScheme& s) {
  double t = 0.0;
  for (double w : s.weights) t += w;
  return t;
}

}  // namespace

TEST_CASE("integration weights partition the sampler") {
  const auto mesh = square_mesh();
  const IntegrationScheme unit = build_integration(*mesh, make_rectangle(3, 3, 4, 4));
  CHECK(std::abs(weight_sum(unit) - 1.0) < 1e-6);
  for (std::size_t k = 0; k < unit.nodes.size(); ++k) {
    CHECK(unit.weights[k] > 0);
    CHECK(unit.nodes[k].x == mesh->vertices[unit.vertex[k]].x);
  }
  // Vertices far from the sampler carry nothing.
  for (std::size_t k = 0; k < unit.nodes.size(); ++k) {
    CHECK(unit.nodes[k].x > 3 - 3.0);
    CHECK(unit.nodes[k].x < 4 + 3.0);
  }

  const double full = weight_sum(build_integration(*mesh, make_rectangle(0, 0, 10, 10)));
  const double half = weight_sum(build_integration(*mesh, make_rectangle(0, 0, 5, 10)));
  CHECK(full == doctest::Approx(100.0).epsilon(1e-8));
  CHECK(half == doctest::Approx(full / 2).epsilon(1e-8));
}

TEST_CASE("integration weights on random convex samplers") {
  const auto mesh = square_mesh();
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Point2 c{rng.uniform(3, 7), rng.uniform(3, 7)};
    const int n = 3 + static_cast<int>(rng.uniform() * 8);
    std::vector<double> ang;
    for (int i = 0; i < n; ++i) ang.push_back(rng.uniform(0, 2 * std::numbers::pi));
    std::sort(ang.begin(), ang.end());
    Ring ring;
    const double r = rng.uniform(0.5, 2.5);
    for (double a : ang) ring.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    const Polygon p = make_polygon(ring);
    const double area = polygon_area(p);
    if (area < 1e-3) continue;
    CHECK(std::abs(weight_sum(build_integration(*mesh, p)) - area) <= 1e-6 * area);
  }
}

TEST_CASE("sampler outside the mesh is a coverage error") {
  CHECK_THROWS_AS(build_integration(*square_mesh(), make_rectangle(-20, -20, 30, 30)), CoverageError);
}

TEST_CASE("log_intensity examples and linearity") {
  const auto mesh = square_mesh();
  Rng rng(3);
  const auto pts = uniform_points(rng, 30, 0, 0, 10, 10);
  {
    ModelSpec m(mesh, {ComponentDef::intercept("a")}, {{"p", pts, make_rectangle(0, 0, 10, 10), {"a"}}});
    Eigen::VectorXd x(1);
    x << 0.7;
    const Eigen::VectorXd eta = m.log_intensity(x, "p", pts);
    for (double v : eta) CHECK(v == 0.7);
  }
  const ModelSpec m = case_control_model(5);
  const int n = m.latent_dim();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  x[m.block_offset(m.component_index("a0"))] = -1.3;
  x[m.block_offset(m.component_index("a1"))] = 0.4;
  const Eigen::VectorXd e0 = m.log_intensity(x, "controls", pts);
  const Eigen::VectorXd e1 = m.log_intensity(x, "cases", pts);
  for (int i = 0; i < e0.size(); ++i) {
    CHECK(e0[i] == doctest::Approx(-1.3).epsilon(1e-15));
    CHECK(e1[i] - e0[i] == doctest::Approx(1.7).epsilon(1e-14));
  }

  Eigen::VectorXd u(n), v(n);
  for (auto& t : u) t = rng.normal();
  for (auto& t : v) t = rng.normal();
  const double a = 0.37, b = -2.1;
  const Eigen::VectorXd lhs = m.log_intensity(a * u + b * v, "cases", pts);
  const Eigen::VectorXd rhs = a * m.log_intensity(u, "cases", pts) + b * m.log_intensity(v, "cases", pts);
  CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-12);

  CHECK_THROWS_AS(m.log_intensity(Eigen::VectorXd::Zero(3), "cases", pts), NumericalError);
  CHECK_THROWS_AS(m.log_intensity(x, "cases", std::vector<Point2>{{100, 100}}), CoverageError);
}

TEST_CASE("homogeneous optimum and the empty pattern") {
  const auto mesh = square_mesh();
  Rng rng(9);
  const auto pts = uniform_points(rng, 140, 0, 0, 10, 10);
  const Polygon d = make_rectangle(0, 0, 10, 10);
  ModelSpec m(mesh, {ComponentDef::intercept("a")}, {{"p", pts, d, {"a"}}});
  const double opt = std::log(140.0 / 100.0);
  Eigen::VectorXd x(1);
  x << opt;
  Eigen::VectorXd g;
  SpMat h;
  m.grad_hess(x, g, h);
  CHECK(std::abs(g[0]) < 1e-8);
  CHECK(h.coeff(0, 0) == doctest::Approx(140.0).epsilon(1e-9));
  for (double dx : {-0.1, -0.01, 0.01, 0.1}) {
    Eigen::VectorXd y(1);
    y << opt + dx;
    CHECK(m.loglik(y) < m.loglik(x));
  }
  CHECK(m.initial_latent()[0] == doctest::Approx(opt).epsilon(1e-9));

  ModelSpec empty(mesh, {ComponentDef::intercept("a")}, {{"p", {}, d, {"a"}}});
  for (double a : {-2.0, 0.0, 1.5}) {
    Eigen::VectorXd y(1);
    y << a;
    CHECK(empty.loglik(y) == doctest::Approx(-100.0 * std::exp(a)).epsilon(1e-9));
  }
}

TEST_CASE("likelihoods without shared components add up") {
  const auto mesh = square_mesh();
  Rng rng(21);
  const auto p1 = uniform_points(rng, 40, 0, 0, 10, 10);
  const auto p2 = uniform_points(rng, 15, 0, 0, 5, 5);
  const Polygon d1 = make_rectangle(0, 0, 10, 10), d2 = make_rectangle(0, 0, 5, 5);
  ModelSpec joint(mesh, {ComponentDef::intercept("a"), ComponentDef::intercept("b")},
                  {{"one", p1, d1, {"a"}}, {"two", p2, d2, {"b"}}});
  ModelSpec one(mesh, {ComponentDef::intercept("a")}, {{"one", p1, d1, {"a"}}});
  ModelSpec two(mesh, {ComponentDef::intercept("b")}, {{"two", p2, d2, {"b"}}});
  Eigen::VectorXd x(2), xa(1), xb(1);
  x << 0.3, -0.8;
  xa << 0.3;
  xb << -0.8;
  CHECK(joint.loglik(x) == doctest::Approx(one.loglik(xa) + two.loglik(xb)).epsilon(1e-13));
}

TEST_CASE("gradient matches central differences") {
  const ModelSpec m = case_control_model(17);
  Rng rng(4);
  Eigen::VectorXd x(m.latent_dim());
  for (auto& v : x) v = 0.5 * rng.normal();
  x[m.block_offset(0)] = -0.5;
  x[m.block_offset(1)] = -1.4;
  Eigen::VectorXd g;
  SpMat h;
  m.grad_hess(x, g, h);
  const double step = 1e-5;
  double worst = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += step;
    xm[j] -= step;
    const double fd = (m.loglik(xp) - m.loglik(xm)) / (2 * step);
    worst = std::max(worst, std::abs(fd - g[j]) / std::max(std::abs(g[j]), 1.0));
  }
  CHECK(worst < 1e-6);

  // Hessian is the derivative of the gradient.
  Eigen::VectorXd dir(x.size());
  for (auto& v : dir) v = rng.normal();
  Eigen::VectorXd gp, gm;
  SpMat unused;
  m.grad_hess(x + step * dir, gp, unused);
  m.grad_hess(x - step * dir, gm, unused);
  const Eigen::VectorXd fd_h = -(gp - gm) / (2 * step);
  const Eigen::VectorXd hv = h * dir;
  CHECK((fd_h - hv).lpNorm<Eigen::Infinity>() < 1e-5 * std::max(1.0, hv.lpNorm<Eigen::Infinity>()));

  for (int k = 0; k < 100; ++k) {
    for (auto& v : dir) v = rng.normal();
    CHECK(dir.dot(h * dir) >= 0.0);
  }
}

TEST_CASE("eta above the clip does not overflow") {
  const auto mesh = square_mesh();
  ModelSpec m(mesh, {ComponentDef::intercept("a")}, {{"p", {{5, 5}}, make_rectangle(0, 0, 10, 10), {"a"}}});
  Eigen::VectorXd x(1);
  x << 50.0;
  CHECK(std::isfinite(m.loglik(x)));
  CHECK(m.clipped_count(x) == static_cast<int>(m.integration(0).nodes.size()));
  x << 1.0;
  CHECK(m.clipped_count(x) == 0);
}

TEST_CASE("shared block appears once with identical columns") {
  const ModelSpec m = case_control_model(2);
  const auto mesh = square_mesh();
  const int shared = m.component_index("shared");
  CHECK(m.latent_dim() == 2 + 2 * mesh->num_vertices());
  CHECK(m.block_size(shared) == mesh->num_vertices());
  CHECK(m.num_hyper() == 4);
  CHECK(m.hyper_offset(m.component_index("specific")) == 2);

  Rng rng(8);
  const auto pts = uniform_points(rng, 50, 0, 0, 10, 10);
  const SpMat a0 = m.design(m.likelihood_index("controls"), pts);
  const SpMat a1 = m.design(m.likelihood_index("cases"), pts);
  const int off = m.block_offset(shared), sz = m.block_size(shared);
  const Eigen::MatrixXd b0 = Eigen::MatrixXd(a0).middleCols(off, sz);
  const Eigen::MatrixXd b1 = Eigen::MatrixXd(a1).middleCols(off, sz);
  CHECK((b0 - b1).lpNorm<Eigen::Infinity>() == 0.0);
  const int spec = m.component_index("specific");
  CHECK(Eigen::MatrixXd(a0).middleCols(m.block_offset(spec), sz).lpNorm<Eigen::Infinity>() == 0.0);

  const auto names = m.hyper_names();
  REQUIRE(names.size() == 4);
  CHECK(names[0] == "shared.range");
  CHECK(names[3] == "specific.sigma");
}

TEST_CASE("model validation") {
  const auto mesh = square_mesh();
  const Polygon d = make_rectangle(0, 0, 10, 10);
  CHECK_THROWS_AS(ModelSpec(mesh, {ComponentDef::intercept("a"), ComponentDef::intercept("a")}, {{"p", {}, d, {"a"}}}),
                  ConfigError);
  CHECK_THROWS_AS(ModelSpec(mesh, {ComponentDef::intercept("a")}, {{"p", {}, d, {"b"}}}), ConfigError);
  CHECK_THROWS_AS(ModelSpec(mesh, {ComponentDef::intercept("a")}, {}), ConfigError);
  CHECK_THROWS_AS(ModelSpec(mesh, {ComponentDef::intercept("a")}, {{"p", {}, d, {}}}), ConfigError);
}

TEST_CASE("covariates: linear effect and missing values") {
  const auto mesh = square_mesh();
  const Polygon d = make_rectangle(0, 0, 10, 10);
  Covariate xcoord;
  xcoord.fn = [](const Point2& p) { return p.x; };
  ModelSpec m(mesh, {ComponentDef::intercept("a"), ComponentDef::linear("beta", xcoord)},
              {{"p", {{1, 1}, {9, 2}}, d, {"a", "beta"}}});
  Eigen::VectorXd x(2);
  x << 0.2, 0.5;
  const std::vector<Point2> q = {{2, 3}, {6, 1}};
  const Eigen::VectorXd eta = m.log_intensity(x, "p", q);
  CHECK(eta[0] == doctest::Approx(1.2));
  CHECK(eta[1] == doctest::Approx(3.2));
  CHECK(m.num_flat() == 1);
  CHECK(m.precision(std::vector<double>{}).coeff(1, 1) == 1000.0);
  CHECK(m.log_det_proper(std::vector<double>{}) == doctest::Approx(std::log(1000.0)));

  // A raster that only covers the left half: integration nodes on the right
  // are dropped, events there are an error.
  auto r = std::make_shared<Raster>(Point2{-10, -10}, 1.0, 15, 30, 1.0);
  Covariate half;
  half.raster = r;
  ModelSpec ok(mesh, {ComponentDef::intercept("a"), ComponentDef::linear("z", half)},
               {{"p", {{1, 1}}, d, {"a", "z"}}});
  CHECK(weight_sum(ok.integration(0)) < 100.0);
  CHECK_THROWS_AS(ModelSpec(mesh, {ComponentDef::intercept("a"), ComponentDef::linear("z", half)},
                            {{"p", {{8, 1}}, d, {"a", "z"}}}),
                  DataError);
}
