#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lgcp/geometry.hpp"
#include "lgcp/mesh.hpp"

namespace lgcp {

struct FieldSpec {
  double range = 3.0;  // km
  double sigma = 1.0;
};

struct ClusterSpec {
  Point2 source;
  int n_points = 0;
  double sd = 0.5;  // km, per coordinate
};

struct SimScenario {
  Polygon sampler;
  double intercept = 0.0;  // log events per km^2
  std::optional<FieldSpec> field;
  std::optional<ClusterSpec> cluster;
  std::uint64_t seed = 1;
};

struct SimResult {
  std::vector<Point2> points;
  Eigen::VectorXd field;  // mesh vertex weights, empty without a field
  double lambda_max = 0.0;
};

// Thinning of a homogeneous Poisson process at the bounding rate lambda_max,
// which is 1.05 times the largest intensity seen on a 256 x 256 grid over the
// sampler box and at the mesh vertices inside the sampler. Cluster points,
// when requested, are injected afterwards from an independent stream.
SimResult simulate_lgcp(const SimScenario& scn, const Mesh2d& mesh);

// Appends n points source + N(0, sd^2) per coordinate, each redrawn until it
// falls inside the sampler (at most 100 tries per point).
std::vector<Point2> inject_cluster(std::vector<Point2> points, const Point2& source, int n, double sd,
                                   const Polygon& sampler, std::uint64_t seed);

}  // namespace lgcp
