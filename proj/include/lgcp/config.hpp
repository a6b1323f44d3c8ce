#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "lgcp/geometry.hpp"
#include "lgcp/inference.hpp"
#include "lgcp/mesh.hpp"
#include "lgcp/simulate.hpp"

namespace lgcp {

enum class ModelTag { Univariate, SharedOnly, SharedSpecific, LinearDist, Spde1dDist, Rw2Dist };

std::string to_string(ModelTag t);
ModelTag model_tag_from_string(const std::string& s);  // throws ConfigError
// The distance models need a source point.
bool needs_source(ModelTag t);

// (threshold, tail probability) pairs as in the PC prior statements
// P(range < r0) = p and P(sigma > s0) = p.
struct PriorPair {
  double value = 1.0;
  double prob = 0.5;
  friend bool operator==(const PriorPair&, const PriorPair&) = default;
};

struct FieldPrior {
  PriorPair range;
  PriorPair sigma;
  friend bool operator==(const FieldPrior&, const FieldPrior&) = default;
};

struct Mesh1dConfig {
  int n_knots = 20;
  int degree = 2;
  // Upper end of the distance mesh; 0 means ceil(max distance) over the data.
  double upper = 0.0;
  friend bool operator==(const Mesh1dConfig&, const Mesh1dConfig&) = default;
};

struct RunConfig {
  // Absolute paths once parsed.
  std::filesystem::path cases;
  std::filesystem::path controls;
  std::filesystem::path boundary;
  std::optional<Point2> source;

  MeshParams mesh;
  Mesh1dConfig mesh1d;

  ModelTag model = ModelTag::SharedSpecific;
  std::string univariate_pattern = "cases";  // or "controls"

  FieldPrior field_prior{{10.0, 0.99}, {1.0, 0.01}};
  FieldPrior smooth_prior{{2.0, 0.99}, {1.0, 0.01}};
  double rw2_range = 10.0;
  PriorPair rw2_sigma{1.0, 0.01};
  double linear_precision = 1000.0;

  Strategy strategy = Strategy::EmpiricalBayes;
  std::uint64_t seed = 1;
  int n_samples = 1000;
  int threads = 1;

  std::filesystem::path output_dir = "out";
  int grid_cells = 128;  // raster cells along the longer side

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Input of the `simulate` command. `lgcp` draws a fresh pattern over the
// configured boundary; `inject` adds a cluster to the configured cases, as in
// a contamination experiment. The cluster source defaults to data.source.
struct ScenarioConfig {
  enum class Mode { Lgcp, Inject };
  Mode mode = Mode::Inject;
  double intercept = 0.0;
  std::optional<FieldSpec> field;
  std::optional<Point2> cluster_source;
  int cluster_n = 0;
  double cluster_sd = 0.5;
  std::optional<std::uint64_t> seed;  // defaults to inference.seed
};

ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::filesystem::path& path);

// Relative paths are resolved against `base_dir`.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);
// TOML text that parses back to an equal RunConfig.
std::string echo_config(const RunConfig& cfg);

}  // namespace lgcp
