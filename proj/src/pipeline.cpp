#include "lgcp/pipeline.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <gsl/gsl_version.h>
#include <spdlog/version.h>

#include "lgcp/error.hpp"
#include "lgcp/io.hpp"
#include "lgcp/log.hpp"
#include "lgcp/rng.hpp"

namespace lgcp {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

PcPrior to_pc(const FieldPrior& p) {
  PcPrior out;
  out.r0 = p.range.value;
  out.alpha_r = p.range.prob;
  out.sigma0 = p.sigma.value;
  out.alpha_sigma = p.sigma.prob;
  return out;
}

void outside_warnings(const std::vector<Point2>& pts, const Polygon& boundary, const std::string& what,
                      std::vector<std::string>& warnings) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (!point_in_polygon(pts[i], boundary)) {
      std::ostringstream os;
      os << what << " row " << i + 1 << " (" << pts[i].x << ", " << pts[i].y << ") lies outside the boundary";
      warnings.push_back(os.str());
    }
}

double max_source_distance(const BuiltModel& m, const Dataset& data, const Point2& source) {
  double d = 0.0;
  for (const auto& p : build_integration(*m.mesh, data.boundary).nodes) d = std::max(d, distance(p, source));
  for (const auto* set : {&data.cases, &data.controls})
    for (const auto& p : *set) d = std::max(d, distance(p, source));
  return d;
}

class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {}

  std::ofstream open(const fs::path& rel, bool binary = false) {
    const fs::path full = root_ / rel;
    fs::create_directories(full.parent_path());
    std::ofstream out(full, binary ? std::ios::binary : std::ios::out);
    if (!out) throw DataError("cannot write " + full.string());
    written_.push_back(rel);
    return out;
  }
  void json(const fs::path& rel, const nlohmann::json& j) { open(rel) << j.dump(2) << '\n'; }
  const fs::path& root() const { return root_; }
  const std::vector<fs::path>& written() const { return written_; }

 private:
  fs::path root_;
  std::vector<fs::path> written_;
};

void write_surface(OutputDir& out, const std::string& name, const SurfaceSummary& s) {
  const std::pair<const char*, const Raster*> stats[] = {
      {"mean", &s.mean}, {"sd", &s.sd}, {"lower", &s.lower}, {"upper", &s.upper}};
  for (const auto& [stat, r] : stats) {
    auto os = out.open(fs::path("surfaces") / (name + "_" + stat + ".asc"));
    write_esri_ascii(os, *r);
  }
  auto svg = out.open(fs::path("surfaces") / (name + "_mean.svg"));
  write_surface_svg(svg, s.mean, name + " (" + to_string(s.quantity) + ", posterior mean)");
}

nlohmann::json versions() {
  return {
      {"lgcp", LGCP_VERSION},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"boost", BOOST_LIB_VERSION},
      {"gsl", GSL_VERSION},
      {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                     std::to_string(SPDLOG_VER_PATCH)},
      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
      {"compiler", __VERSION__},
  };
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Mesh:
      return "mesh";
    case Stage::Fit:
      return "fit";
    case Stage::Predict:
      return "predict";
    case Stage::All:
      return "all";
  }
  return "?";
}

// Posterior-mean range of a field over the grid cells inside the sampler.
double surface_range(const Raster& r) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : r.values)
    if (!r.is_nodata(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  return hi >= lo ? hi - lo : 0.0;
}

}  // namespace

Dataset ingest(const RunConfig& cfg) {
  Dataset d;
  d.boundary = read_geojson_polygon(cfg.boundary);
  d.cases = read_points_csv(cfg.cases);
  d.controls = read_points_csv(cfg.controls);
  d.source = cfg.source;
  if (d.cases.empty()) d.warnings.push_back("no cases in " + cfg.cases.string());
  if (d.controls.empty()) d.warnings.push_back("no controls in " + cfg.controls.string());
  outside_warnings(d.cases, d.boundary, "case", d.warnings);
  outside_warnings(d.controls, d.boundary, "control", d.warnings);
  if (d.source && !point_in_polygon(*d.source, dilate(d.boundary, cfg.mesh.offset[0])))
    d.warnings.push_back("source point lies outside the boundary");
  for (const auto& w : d.warnings) logger()->warn("{}", w);
  logger()->info("ingested {} cases and {} controls", d.cases.size(), d.controls.size());
  return d;
}

std::shared_ptr<const Mesh2d> build_mesh(const RunConfig& cfg, const Dataset& data) {
  return std::make_shared<const Mesh2d>(build_mesh_2d(data.boundary, cfg.mesh));
}

BuiltModel build_model(const RunConfig& cfg, const Dataset& data, std::shared_ptr<const Mesh2d> mesh) {
  BuiltModel m;
  m.tag = cfg.model;
  m.mesh = std::move(mesh);
  auto field = [&] { return std::make_shared<const SpdeModel>(spde_model(*m.mesh, to_pc(cfg.field_prior))); };

  std::vector<ComponentDef> comps;
  std::vector<LikelihoodDef> liks;
  if (cfg.model == ModelTag::Univariate) {
    const bool cases = cfg.univariate_pattern == kCases;
    comps = {ComponentDef::intercept("alpha"), ComponentDef::field("field", field())};
    liks.push_back({cfg.univariate_pattern, cases ? data.cases : data.controls, data.boundary, {"alpha", "field"}});
    m.patterns = {cfg.univariate_pattern};
    m.fields = {"field"};
  } else {
    comps = {ComponentDef::intercept("alpha_controls"), ComponentDef::intercept("alpha_cases"),
             ComponentDef::field("shared", field())};
    std::vector<std::string> case_formula{"alpha_cases", "shared"};
    m.fields = {"shared"};
    if (cfg.model != ModelTag::SharedOnly) {
      comps.push_back(ComponentDef::field("specific", field()));
      case_formula.push_back("specific");
      m.fields.push_back("specific");
    }
    if (needs_source(cfg.model)) {
      const Point2 src = *data.source;
      Covariate dist;
      dist.fn = [src](const Point2& p) { return distance(p, src); };
      if (cfg.model == ModelTag::LinearDist) {
        comps.push_back(ComponentDef::linear("dist", dist, cfg.linear_precision));
      } else {
        double upper = cfg.mesh1d.upper;
        if (upper == 0.0) upper = std::ceil(max_source_distance(m, data, src));
        m.mesh1d = std::make_shared<const Mesh1d>(build_mesh_1d(0.0, upper, cfg.mesh1d.n_knots, cfg.mesh1d.degree));
        std::shared_ptr<const SpdeModel> spde;
        if (cfg.model == ModelTag::Spde1dDist) {
          spde = std::make_shared<const SpdeModel>(spde_model(*m.mesh1d, to_pc(cfg.smooth_prior), true));
        } else {
          spde = std::make_shared<const SpdeModel>(
              rw2_model(*m.mesh1d, cfg.rw2_range, cfg.rw2_sigma.value, cfg.rw2_sigma.prob));
        }
        comps.push_back(ComponentDef::smooth("dist", m.mesh1d, spde, dist));
      }
      case_formula.push_back("dist");
      m.distance_component = "dist";
    }
    liks.push_back({kControls, data.controls, data.boundary, {"alpha_controls", "shared"}});
    liks.push_back({kCases, data.cases, data.boundary, case_formula});
    m.patterns = {kControls, kCases};
  }
  m.spec = std::make_unique<ModelSpec>(m.mesh, std::move(comps), std::move(liks));
  return m;
}

nlohmann::json fit_summaries(const BuiltModel& model, const FitResult& fit, const DrawSet& draws) {
  const ModelSpec& spec = *model.spec;
  nlohmann::json j;
  j["model"] = to_string(model.tag);
  auto& comps = j["components"] = nlohmann::json::array();
  auto& fixed = j["fixed"] = nlohmann::json::array();
  for (int c = 0; c < static_cast<int>(spec.components().size()); ++c) {
    const auto& comp = spec.components()[c];
    const char* kind = comp.kind == ComponentKind::Intercept ? "intercept"
                       : comp.kind == ComponentKind::Field   ? "field"
                       : comp.kind == ComponentKind::Linear  ? "linear"
                                                             : "smooth";
    comps.push_back({{"name", comp.name}, {"kind", kind}, {"size", spec.block_size(c)}});
    if (comp.kind == ComponentKind::Intercept || comp.kind == ComponentKind::Linear) {
      const Eigen::MatrixXd col = draws.x.col(spec.block_offset(c));
      auto s = summary_to_json(summarize(col, {comp.name}).front());
      s["mode"] = fit.at_mode().mode[spec.block_offset(c)];
      if (comp.kind == ComponentKind::Linear) {
        s["prior_precision"] = comp.prior_precision;
        s["prob_negative"] = (col.array() < 0.0).cast<double>().mean();
      }
      fixed.push_back(s);
    }
  }
  auto& hyper = j["hyperparameters"] = nlohmann::json::array();
  for (const auto& s : fit.hyper_summary) hyper.push_back(summary_to_json(s));
  j["theta_names"] = spec.hyper_names();
  j["theta_mode"] = fit.hyper.mode;
  auto& h = j["theta_hessian"] = nlohmann::json::array();
  for (Eigen::Index r = 0; r < fit.hyper.hessian.rows(); ++r) {
    std::vector<double> row(fit.hyper.hessian.cols());
    for (Eigen::Index c = 0; c < fit.hyper.hessian.cols(); ++c) row[c] = fit.hyper.hessian(r, c);
    h.push_back(row);
  }
  auto& grid = j["theta_grid"] = nlohmann::json::array();
  for (const auto& g : fit.hyper.grid)
    grid.push_back({{"theta", g.theta}, {"log_density", g.log_density}, {"weight", g.weight}});
  auto& trace = j["trace"] = nlohmann::json::array();
  for (const auto& t : fit.hyper.trace) trace.push_back({{"theta", t.theta}, {"log_density", t.log_density}});
  j["evaluations"] = fit.hyper.evaluations;
  j["newton_iterations"] = fit.newton_iterations;
  j["strategy"] = fit.hyper.strategy == Strategy::Grid ? "grid" : "empirical_bayes";
  j["n_samples"] = draws.x.rows();
  j["sample_seed"] = draws.seed;
  j["warnings"] = fit.warnings;
  return j;
}

RunReport run_pipeline(const RunConfig& cfg, Stage stage) {
  cfg.validate();
  const auto t0 = Clock::now();
  RunReport report;
  report.output_dir = cfg.output_dir;
  fs::create_directories(cfg.output_dir);
  fs::remove(cfg.output_dir / "FAILED");
  OutputDir out(cfg.output_dir);
  nlohmann::json manifest{{"stage", stage_name(stage)}, {"config", echo_config(cfg)}, {"versions", versions()},
                          {"seed", cfg.seed},           {"threads", cfg.threads}};

  auto finish = [&](const std::string& status) {
    report.total_seconds = seconds_since(t0);
    manifest["status"] = status;
    manifest["timings"] = {{"fit_seconds", report.fit_seconds}, {"total_seconds", report.total_seconds}};
    auto& files = manifest["outputs"] = nlohmann::json::array();
    for (const auto& rel : out.written()) {
      std::error_code ec;
      const auto bytes = fs::file_size(out.root() / rel, ec);
      files.push_back({{"path", rel.generic_string()}, {"bytes", ec ? 0 : bytes}});
    }
    std::ofstream(cfg.output_dir / "manifest.json") << manifest.dump(2) << '\n';
    report.outputs = out.written();
  };

  try {
    const Dataset data = ingest(cfg);
    manifest["counts"] = {{"cases", data.cases.size()}, {"controls", data.controls.size()}};
    manifest["warnings"] = data.warnings;

    const auto mesh = build_mesh(cfg, data);
    out.json("mesh.json", mesh_to_json(*mesh));
    manifest["mesh"] = quality_to_json(mesh_quality(*mesh));
    if (stage == Stage::Mesh) {
      finish("ok");
      return report;
    }

    const BuiltModel model = build_model(cfg, data, mesh);
    const std::uint64_t draw_seed = derive_seed(cfg.seed, 1);
    FitResult fitted;
    if (stage == Stage::Predict) {
      std::ifstream in(cfg.output_dir / "fit.lgfit", std::ios::binary);
      if (!in) throw DataError("no fit.lgfit in " + cfg.output_dir.string() + "; run `fit` first");
      fitted = read_fit_sidecar(in);
      if (fitted.at_mode().mode.size() != model.spec->latent_dim())
        throw DataError("fit.lgfit does not match the configured model; run `fit` again");
    } else {
      const auto tf = Clock::now();
      FitOptions opts;
      opts.strategy = cfg.strategy;
      opts.threads = cfg.threads;
      fitted = fit(*model.spec, *model.spec, opts);
      report.fit_seconds = seconds_since(tf);
      {
        auto os = out.open("fit.lgfit", true);
        write_fit_sidecar(os, fitted);
      }
    }
    const DrawSet draws = draw_latent(fitted, cfg.n_samples, draw_seed, cfg.threads);
    if (stage != Stage::Predict) {
      report.summaries = fit_summaries(model, fitted, draws);
      nlohmann::json fj{{"summaries", report.summaries},
                        {"runtime", {{"fit_seconds", report.fit_seconds}}},
                        {"counts", manifest["counts"]}};
      out.json("fit.json", fj);
    }
    if (stage == Stage::Fit) {
      finish("ok");
      return report;
    }

    const Raster grid = default_grid(data.boundary, cfg.grid_cells);
    const int th = cfg.threads;
    nlohmann::json field_ranges;
    for (const auto& p : model.patterns) write_surface(out, "intensity_" + p, predict_intensity(draws, *model.spec, p, grid, false, th));
    for (const auto& f : model.fields) {
      const SurfaceSummary s = component_effect(draws, *model.spec, f, grid, th);
      field_ranges[f] = surface_range(s.mean);
      write_surface(out, "field_" + f, s);
    }
    if (model.patterns.size() == 2)
      write_surface(out, "log_relative_risk", log_relative_risk(draws, *model.spec, kCases, kControls, grid, th));
    if (std::find(model.fields.begin(), model.fields.end(), "specific") != model.fields.end())
      write_surface(out, "exceedance_specific", exceedance(draws, *model.spec, "specific", grid, 0.0, th));
    if (model.distance_component) {
      write_surface(out, "effect_dist", component_effect(draws, *model.spec, "dist", grid, th));
      const double upper = model.mesh1d ? model.mesh1d->upper() : std::ceil(max_source_distance(model, data, *data.source));
      std::vector<double> d;
      for (int i = 0; i <= 100; ++i) d.push_back(std::min(upper, upper * i / 100.0));
      const EffectCurve curve = effect_curve(draws, *model.spec, "dist", d);
      auto csv = out.open("curves/dist.csv");
      write_curve_csv(csv, curve);
      auto svg = out.open("curves/dist.svg");
      write_curve_svg(svg, curve);
    }
    manifest["field_mean_range"] = field_ranges;
    finish("ok");
    return report;
  } catch (const std::exception& e) {
    std::ofstream(cfg.output_dir / "FAILED") << e.what() << '\n';
    manifest["error"] = e.what();
    finish("failed");
    throw;
  }
}

RunReport run_simulate(const RunConfig& cfg, const ScenarioConfig& sc) {
  const auto t0 = Clock::now();
  RunReport report;
  report.output_dir = cfg.output_dir;
  fs::create_directories(cfg.output_dir);
  fs::remove(cfg.output_dir / "FAILED");
  OutputDir out(cfg.output_dir);
  const std::uint64_t seed = sc.seed.value_or(cfg.seed);
  nlohmann::json manifest{{"stage", "simulate"}, {"config", echo_config(cfg)}, {"versions", versions()},
                          {"seed", seed}};
  std::exception_ptr failure;
  try {
    const Polygon boundary = read_geojson_polygon(cfg.boundary);
    const auto source = sc.cluster_source ? sc.cluster_source : cfg.source;
    if (sc.cluster_n > 0 && !source) throw ConfigError("a cluster needs 'cluster.source' or 'data.source'");
    std::vector<NamedPattern> patterns;
    if (sc.mode == ScenarioConfig::Mode::Inject) {
      const Dataset data = ingest(cfg);
      auto cases = data.cases;
      if (sc.cluster_n > 0) cases = inject_cluster(std::move(cases), *source, sc.cluster_n, sc.cluster_sd, boundary, seed);
      patterns = {{kControls, data.controls}, {kCases, cases}};
    } else {
      SimScenario scn;
      scn.sampler = boundary;
      scn.intercept = sc.intercept;
      scn.field = sc.field;
      if (sc.cluster_n > 0) scn.cluster = ClusterSpec{*source, sc.cluster_n, sc.cluster_sd};
      scn.seed = seed;
      std::shared_ptr<const Mesh2d> mesh;
      if (sc.field) mesh = std::make_shared<const Mesh2d>(build_mesh_2d(boundary, cfg.mesh));
      else mesh = std::make_shared<const Mesh2d>();
      SimResult sim = simulate_lgcp(scn, *mesh);
      manifest["lambda_max"] = sim.lambda_max;
      patterns = {{"simulated", std::move(sim.points)}};
    }
    {
      auto os = out.open("patterns.csv");
      write_patterns_csv(os, patterns);
    }
    nlohmann::json counts;
    for (const auto& p : patterns) {
      auto os = out.open(p.name + ".csv");
      os << "x,y\n" << std::setprecision(17);
      for (const auto& pt : p.points) os << pt.x << ',' << pt.y << '\n';
      counts[p.name] = p.points.size();
    }
    manifest["counts"] = counts;
    manifest["status"] = "ok";
  } catch (const std::exception& e) {
    std::ofstream(cfg.output_dir / "FAILED") << e.what() << '\n';
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    failure = std::current_exception();
  }
  report.total_seconds = seconds_since(t0);
  manifest["timings"] = {{"fit_seconds", 0.0}, {"total_seconds", report.total_seconds}};
  auto& files = manifest["outputs"] = nlohmann::json::array();
  for (const auto& rel : out.written()) files.push_back({{"path", rel.generic_string()}, {"bytes", fs::file_size(out.root() / rel)}});
  std::ofstream(cfg.output_dir / "manifest.json") << manifest.dump(2) << '\n';
  report.outputs = out.written();
  if (failure) std::rethrow_exception(failure);
  return report;
}

}  // namespace lgcp
