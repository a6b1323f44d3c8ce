#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgcp/config.hpp"
#include "lgcp/model.hpp"
#include "lgcp/predict.hpp"

namespace lgcp {

struct Dataset {
  std::vector<Point2> cases;
  std::vector<Point2> controls;
  Polygon boundary;
  std::optional<Point2> source;
  std::vector<std::string> warnings;  // points outside the boundary, empty files
};

// Reads the files named in the config. Points outside the boundary are kept
// and listed in `warnings`.
Dataset ingest(const RunConfig& cfg);

// Pattern and component names used by the model menu.
inline constexpr const char* kCases = "cases";
inline constexpr const char* kControls = "controls";

struct BuiltModel {
  ModelTag tag = ModelTag::SharedSpecific;
  std::shared_ptr<const Mesh2d> mesh;
  std::shared_ptr<const Mesh1d> mesh1d;  // distance smooths only
  std::unique_ptr<ModelSpec> spec;
  // Patterns in the likelihood, and the field components.
  std::vector<std::string> patterns;
  std::vector<std::string> fields;
  std::optional<std::string> distance_component;
};

std::shared_ptr<const Mesh2d> build_mesh(const RunConfig& cfg, const Dataset& data);
BuiltModel build_model(const RunConfig& cfg, const Dataset& data, std::shared_ptr<const Mesh2d> mesh);

// Posterior summaries of a fit; deterministic for a fixed seed, so two runs
// can be compared byte for byte. Timings are kept out of it.
nlohmann::json fit_summaries(const BuiltModel& model, const FitResult& fit, const DrawSet& draws);

enum class Stage { Mesh, Fit, Predict, All };

struct RunReport {
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> outputs;  // relative to output_dir
  nlohmann::json summaries;                     // empty unless a fit ran
  double fit_seconds = 0.0;
  double total_seconds = 0.0;
};

// Mesh: mesh.json. Fit: mesh, fit.json and the fit.lgfit sidecar. Predict:
// surfaces and curves from an existing sidecar. All: everything. A run
// manifest is written in every case; on failure a FAILED file holding the
// message is left next to the partial outputs and the error is rethrown.
RunReport run_pipeline(const RunConfig& cfg, Stage stage);

// Writes patterns.csv (x,y,pattern) and one x,y file per pattern. In inject
// mode the patterns are the configured controls and the cases with the
// cluster added; in lgcp mode a single pattern `simulated`.
RunReport run_simulate(const RunConfig& cfg, const ScenarioConfig& scenario);

}  // namespace lgcp
