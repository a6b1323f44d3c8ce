#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgcp/inference.hpp"
#include "lgcp/model.hpp"

namespace lgcp {

enum class Quantity { Intensity, LogIntensity, LogRelativeRisk, ComponentEffect, Exceedance };
std::string to_string(Quantity q);

// Four aligned rasters. Cells outside the sampler hold NODATA. For
// exceedance surfaces `mean` is the probability, `sd` its Monte Carlo
// standard error and lower/upper a 95% band around it.
struct SurfaceSummary {
  Quantity quantity = Quantity::Intensity;
  Raster mean, sd, lower, upper;
};

struct EffectCurve {
  std::string component;
  std::vector<double> distance, mean, lower, upper;
};

// Posterior draws shared by all surfaces of one prediction call.
struct DrawSet {
  Eigen::MatrixXd x;  // n x latent dim
  std::uint64_t seed = 0;
};
DrawSet draw_latent(const FitResult& fit, int n_samples, std::uint64_t seed, int threads = 1);

// Default prediction grid: 128 x 128 cells over the sampler's bounding box.
Raster default_grid(const Polygon& sampler, int cells = 128);

SurfaceSummary predict_intensity(const DrawSet& draws, const ModelSpec& spec, const std::string& pattern,
                                 const Raster& grid, bool log_scale = false, int threads = 1);
SurfaceSummary log_relative_risk(const DrawSet& draws, const ModelSpec& spec, const std::string& case_pattern,
                                 const std::string& control_pattern, const Raster& grid, int threads = 1);
// Effect of one component alone, e.g. a spatial field.
SurfaceSummary component_effect(const DrawSet& draws, const ModelSpec& spec, const std::string& component,
                                 const Raster& grid, int threads = 1);
SurfaceSummary exceedance(const DrawSet& draws, const ModelSpec& spec, const std::string& component,
                          const Raster& grid, double threshold, int threads = 1);
// Linear: beta * d. Smooth: the 1D basis at d times the coefficients.
EffectCurve effect_curve(const DrawSet& draws, const ModelSpec& spec, const std::string& component,
                         const std::vector<double>& distances);

}  // namespace lgcp
