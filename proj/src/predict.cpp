#include "lgcp/predict.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "lgcp/error.hpp"

namespace lgcp {

namespace {

struct CellStats {
  double mean, sd, lower, upper;
};

// Summary of one cell's draws; `values` is reordered.
CellStats stats(std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  double m = 0.0;
  for (double v : values) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  std::sort(values.begin(), values.end());
  return {m, values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0, quantile_sorted(values, 0.025),
          quantile_sorted(values, 0.975)};
}

Raster blank_like(const Raster& grid) {
  Raster r(grid.origin, grid.cell_size, grid.ncols, grid.nrows, grid.nodata);
  r.nodata = grid.nodata;
  return r;
}

// Evaluates `cell_value(row_design_product, draw)` for every grid cell inside
// the sampler, one raster row per task.
template <class Design, class Reduce>
SurfaceSummary surface(Quantity q, const DrawSet& draws, const Raster& grid, const Polygon& sampler, int threads,
                       Design&& design, Reduce&& reduce) {
  if (draws.x.rows() == 0) throw NumericalError("prediction needs at least one posterior draw");
  SurfaceSummary out;
  out.quantity = q;
  out.mean = blank_like(grid);
  out.sd = blank_like(grid);
  out.lower = blank_like(grid);
  out.upper = blank_like(grid);
  const Eigen::MatrixXd xt = draws.x.transpose();
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int row = next++; row < grid.nrows; row = next++) {
      try {
        std::vector<Point2> pts;
        std::vector<int> cols;
        for (int col = 0; col < grid.ncols; ++col) {
          const Point2 c = grid.cell_center(row, col);
          if (point_in_polygon(c, sampler)) {
            pts.push_back(c);
            cols.push_back(col);
          }
        }
        if (pts.empty()) continue;
        const Eigen::MatrixXd eta = design(pts) * xt;  // cells x draws
        std::vector<double> values(static_cast<std::size_t>(eta.cols()));
        for (std::size_t k = 0; k < pts.size(); ++k) {
          for (Eigen::Index j = 0; j < eta.cols(); ++j) values[j] = eta(static_cast<Eigen::Index>(k), j);
          const CellStats s = reduce(values);
          out.mean.at(row, cols[k]) = s.mean;
          out.sd.at(row, cols[k]) = s.sd;
          out.lower.at(row, cols[k]) = s.lower;
          out.upper.at(row, cols[k]) = s.upper;
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  threads = std::clamp(threads, 1, std::max(grid.nrows, 1));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

const Polygon& sampler_of_component(const ModelSpec& spec, int component) {
  const std::string& name = spec.components()[component].name;
  for (const auto& l : spec.likelihoods())
    if (std::find(l.formula.begin(), l.formula.end(), name) != l.formula.end()) return l.sampler;
  return spec.likelihoods().front().sampler;
}

}  // namespace

std::string to_string(Quantity q) {
  switch (q) {
    case Quantity::Intensity:
      return "intensity";
    case Quantity::LogIntensity:
      return "log-intensity";
    case Quantity::LogRelativeRisk:
      return "log-relative-risk";
    case Quantity::ComponentEffect:
      return "component-effect";
    case Quantity::Exceedance:
      return "exceedance";
  }
  return "unknown";
}

DrawSet draw_latent(const FitResult& fit, int n_samples, std::uint64_t seed, int threads) {
  return {sample_posterior(fit, n_samples, seed, threads), seed};
}

Raster default_grid(const Polygon& sampler, int cells) {
  const BBox b = bbox(sampler);
  const double size = std::max(b.width(), b.height()) / cells;
  const int ncols = std::max(1, static_cast<int>(std::ceil(b.width() / size - 1e-9)));
  const int nrows = std::max(1, static_cast<int>(std::ceil(b.height() / size - 1e-9)));
  return Raster({b.xmin, b.ymin}, size, ncols, nrows, -9999.0);
}

SurfaceSummary predict_intensity(const DrawSet& draws, const ModelSpec& spec, const std::string& pattern,
                                 const Raster& grid, bool log_scale, int threads) {
  const int li = spec.likelihood_index(pattern);
  return surface(
      log_scale ? Quantity::LogIntensity : Quantity::Intensity, draws, grid, spec.likelihoods()[li].sampler, threads,
      [&](std::span<const Point2> pts) { return spec.design(li, pts); },
      [&](std::vector<double>& v) {
        if (!log_scale)
          for (double& e : v) e = std::exp(std::min(e, kEtaClip));
        return stats(v);
      });
}

SurfaceSummary log_relative_risk(const DrawSet& draws, const ModelSpec& spec, const std::string& case_pattern,
                                 const std::string& control_pattern, const Raster& grid, int threads) {
  const int lc = spec.likelihood_index(case_pattern), l0 = spec.likelihood_index(control_pattern);
  return surface(
      Quantity::LogRelativeRisk, draws, grid, spec.likelihoods()[lc].sampler, threads,
      [&](std::span<const Point2> pts) { return SpMat(spec.design(lc, pts) - spec.design(l0, pts)); },
      [](std::vector<double>& v) { return stats(v); });
}

SurfaceSummary component_effect(const DrawSet& draws, const ModelSpec& spec, const std::string& component,
                                const Raster& grid, int threads) {
  const int c = spec.component_index(component);
  return surface(
      Quantity::ComponentEffect, draws, grid, sampler_of_component(spec, c), threads,
      [&](std::span<const Point2> pts) { return spec.component_design(c, pts); },
      [](std::vector<double>& v) { return stats(v); });
}

SurfaceSummary exceedance(const DrawSet& draws, const ModelSpec& spec, const std::string& component,
                          const Raster& grid, double threshold, int threads) {
  const int c = spec.component_index(component);
  if (spec.components()[c].kind != ComponentKind::Field)
    throw ConfigError("exceedance: component '" + component + "' is not a spatial field");
  return surface(
      Quantity::Exceedance, draws, grid, sampler_of_component(spec, c), threads,
      [&](std::span<const Point2> pts) { return spec.component_design(c, pts); },
      [&](std::vector<double>& v) {
        const auto n = static_cast<double>(v.size());
        double hits = 0;
        for (double e : v) hits += e > threshold;
        const double p = hits / n;
        const double se = std::sqrt(p * (1 - p) / n);
        return CellStats{p, se, std::max(0.0, p - 1.959964 * se), std::min(1.0, p + 1.959964 * se)};
      });
}

EffectCurve effect_curve(const DrawSet& draws, const ModelSpec& spec, const std::string& component,
                         const std::vector<double>& distances) {
  const int c = spec.component_index(component);
  const auto& comp = spec.components()[c];
  if (comp.kind != ComponentKind::Linear && comp.kind != ComponentKind::Smooth)
    throw ConfigError("effect curve: component '" + component + "' is not a covariate effect");
  if (draws.x.rows() == 0) throw NumericalError("effect curve needs at least one posterior draw");
  for (std::size_t i = 1; i < distances.size(); ++i)
    if (!(distances[i] > distances[i - 1])) throw ConfigError("effect curve: distances must increase");
  const int off = spec.block_offset(c), size = spec.block_size(c);
  Eigen::MatrixXd basis;  // distances x block
  if (comp.kind == ComponentKind::Linear) {
    basis = Eigen::Map<const Eigen::VectorXd>(distances.data(), static_cast<Eigen::Index>(distances.size()));
  } else {
    for (double d : distances)
      if (d < comp.mesh1d->knots.front() || d > comp.mesh1d->knots.back())
        throw CoverageError("effect curve: distance " + std::to_string(d) + " outside the 1D mesh");
    basis = Eigen::MatrixXd(basis_eval_1d(*comp.mesh1d, distances).a);
  }
  const Eigen::MatrixXd values = basis * draws.x.middleCols(off, size).transpose();
  EffectCurve out;
  out.component = component;
  out.distance = distances;
  std::vector<double> v(static_cast<std::size_t>(values.cols()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) v[j] = values(i, j);
    const CellStats s = stats(v);
    out.mean.push_back(s.mean);
    out.lower.push_back(s.lower);
    out.upper.push_back(s.upper);
  }
  return out;
}

}  // namespace lgcp
