#include "lgcp/simulate.hpp"

#include <cmath>

#include "lgcp/error.hpp"
#include "lgcp/log.hpp"
#include "lgcp/rng.hpp"
#include "lgcp/sparse_cholesky.hpp"
#include "lgcp/spde.hpp"

namespace lgcp {

namespace {

constexpr int kLambdaGrid = 256;
constexpr double kHeadroom = 1.05;
// exp() of anything above this is too large to thin against.
constexpr double kMaxLogRate = 30.0;

}  // namespace

SimResult simulate_lgcp(const SimScenario& scn, const Mesh2d& mesh) {
  if (scn.field && !(scn.field->range > 0 && scn.field->sigma > 0))
    throw ConfigError("scenario: field range and sigma must be > 0");
  SimResult out;
  const double area = scn.sampler.exterior.size() < 3 ? 0.0 : polygon_area(scn.sampler);
  Rng rng(scn.seed);
  if (area > 0) {
    const TriangleLocator locator(mesh);
    if (scn.field) {
      const MaternParams mp{scn.field->range, scn.field->sigma, 2};
      const SparseCholesky factor(precision_alpha2(assemble_fem(mesh), mp.kappa(), mp.tau()));
      Rng field_rng = rng.split(1);
      Eigen::VectorXd z(mesh.num_vertices());
      for (auto& v : z) v = field_rng.normal();
      out.field = factor.sample_offset(z);
    }
    auto eta = [&](std::span<const Point2> pts) -> Eigen::VectorXd {
      Eigen::VectorXd e = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(pts.size()), scn.intercept);
      if (scn.field) e += basis_eval(locator, pts) * out.field;
      return e;
    };

    const BBox box = bbox(scn.sampler);
    std::vector<Point2> probe;
    for (int i = 0; i < kLambdaGrid; ++i)
      for (int j = 0; j < kLambdaGrid; ++j)
        probe.push_back({box.xmin + (j + 0.5) * box.width() / kLambdaGrid,
                         box.ymin + (i + 0.5) * box.height() / kLambdaGrid});
    double max_eta = eta(probe).maxCoeff();
    if (scn.field)
      for (int v = 0; v < mesh.num_vertices(); ++v)
        if (point_in_polygon(mesh.vertices[v], scn.sampler))
          max_eta = std::max(max_eta, scn.intercept + out.field[v]);
    if (max_eta > kMaxLogRate)
      throw ConfigError("scenario: intensity bound exp(" + std::to_string(max_eta) + ") overflows");
    out.lambda_max = kHeadroom * std::exp(max_eta);

    const double box_area = box.width() * box.height();
    Rng thin_rng = rng.split(2);
    const auto n = thin_rng.poisson(out.lambda_max * box_area);
    std::vector<Point2> cand;
    cand.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      const Point2 p{thin_rng.uniform(box.xmin, box.xmax), thin_rng.uniform(box.ymin, box.ymax)};
      if (point_in_polygon(p, scn.sampler)) cand.push_back(p);
    }
    const Eigen::VectorXd e = eta(cand);
    int over = 0;
    for (std::size_t k = 0; k < cand.size(); ++k) {
      const double lambda = std::exp(e[static_cast<Eigen::Index>(k)]);
      if (lambda > out.lambda_max) ++over;
      if (thin_rng.uniform() * out.lambda_max < lambda) out.points.push_back(cand[k]);
    }
    if (over > 0) logger()->warn("simulate: {} candidate(s) exceeded the intensity bound", over);
  }
  if (scn.cluster)
    out.points = inject_cluster(std::move(out.points), scn.cluster->source, scn.cluster->n_points, scn.cluster->sd,
                                scn.sampler, derive_seed(scn.seed, 3));
  return out;
}

std::vector<Point2> inject_cluster(std::vector<Point2> points, const Point2& source, int n, double sd,
                                   const Polygon& sampler, std::uint64_t seed) {
  if (n < 0) throw ConfigError("cluster: n_points must be >= 0");
  if (n == 0) return points;
  if (!(sd > 0)) throw ConfigError("cluster: sd must be > 0");
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double dx = sd * rng.normal();
      const double dy = sd * rng.normal();
      const Point2 p{source.x + dx, source.y + dy};
      if (point_in_polygon(p, sampler)) {
        points.push_back(p);
        placed = true;
      }
    }
    if (!placed)
      throw ConfigError("cluster: no point near the source fell inside the sampler after 100 tries");
  }
  return points;
}

}  // namespace lgcp
