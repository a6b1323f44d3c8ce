// Acceptance checks: one PASS/FAIL line per criterion. The exit status is 1
// unless the failing criteria are exactly those named by --expect-fail.
// `--only 2,5` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "lgcp/error.hpp"
#include "lgcp/inference.hpp"
#include "lgcp/pipeline.hpp"
#include "lgcp/predict.hpp"
#include "lgcp/rng.hpp"
#include "lgcp/simulate.hpp"

using namespace lgcp;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

const fs::path kChorley = fs::path(LGCP_SOURCE_DIR) / "data" / "chorley";
const Point2 kIncinerator{354.5, 413.6};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig chorley_config(ModelTag model, const fs::path& out) {
  RunConfig cfg;
  cfg.cases = kChorley / "larynx.csv";
  cfg.controls = kChorley / "lung.csv";
  cfg.boundary = kChorley / "boundary.geojson";
  cfg.source = kIncinerator;
  cfg.model = model;
  cfg.output_dir = out;
  cfg.seed = 2024;
  return cfg;
}

PcPrior pc(double r0, double ar, double s0, double as) {
  PcPrior p;
  p.r0 = r0;
  p.alpha_r = ar;
  p.sigma0 = s0;
  p.alpha_sigma = as;
  return p;
}

// 1. Counts of the bundled fixture.
Outcome data_fidelity() {
  const auto t0 = Clock::now();
  const Dataset d = ingest(chorley_config(ModelTag::SharedSpecific, "unused"));
  const double t = since(t0);
  return {d.controls.size() == 978 && d.cases.size() == 58 && t < 1.0,
          fmt("%zu controls, %zu cases (want 978, 58); %.3f s (< 1 s)", d.controls.size(), d.cases.size(), t)};
}

// 2. Intercept-only fit to 500 uniform points on a 10 x 10 km square.
Outcome homogeneous() {
  const auto t0 = Clock::now();
  Rng rng(20240501);
  std::vector<Point2> pts;
  for (int i = 0; i < 500; ++i) pts.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
  MeshParams mp;
  mp.cutoff = 0.3;
  mp.max_edge = {1.0, 3.0};
  mp.offset = {1.0, 4.0};
  const auto mesh = std::make_shared<const Mesh2d>(build_mesh_2d(make_rectangle(0, 0, 10, 10), mp));
  const ModelSpec spec(mesh, {ComponentDef::intercept("alpha")},
                       {{"points", pts, make_rectangle(0, 0, 10, 10), {"alpha"}}});
  const FitResult f = fit(spec, spec);
  const double alpha = f.at_mode().mode[0];
  const double err = std::abs(alpha - std::log(500.0 / 100.0));
  const double t = since(t0);
  return {err < 0.02 && t < 10.0, fmt("alpha = %.6f, |alpha - log 5| = %.2e (< 0.02); %.2f s (< 10 s)", alpha, err, t)};
}

// 3. Correlation at lag = nominal range from the discrete precision.
Outcome matern_recovery() {
  const auto t0 = Clock::now();
  MeshParams mp;
  mp.cutoff = 0.1;
  mp.max_edge = {0.4, 2.0};
  mp.offset = {2.0, 12.0};
  const Mesh2d mesh = build_mesh_2d(make_rectangle(0, 0, 20, 20), mp);
  const MaternParams params{5.0, 1.0, 2};
  const SparseCholesky chol(precision_alpha2(assemble_fem(mesh), params.kappa(), params.tau()));
  // Point covariance through the basis: Cov(u(s), u(t)) = a_s' Q^-1 a_t.
  const Point2 centre{10, 10};
  std::vector<Point2> pts{centre};
  const int dirs = 8;
  for (int k = 0; k < dirs; ++k) {
    const double a = 2 * M_PI * k / dirs;
    pts.push_back({centre.x + params.range * std::cos(a), centre.y + params.range * std::sin(a)});
  }
  const SpMat a = basis_eval(mesh, pts);
  const Eigen::MatrixXd cov = Eigen::MatrixXd(a) * chol.solve(Eigen::MatrixXd(a.transpose()));
  double mean_corr = 0.0;
  for (int k = 1; k <= dirs; ++k) mean_corr += cov(0, k) / std::sqrt(cov(0, 0) * cov(k, k)) / dirs;
  const double t = since(t0);
  return {std::abs(mean_corr - 0.14) <= 0.05 && t < 30.0,
          fmt("%d vertices, corr at lag %.1f = %.4f (0.14 +- 0.05); %.2f s (< 30 s)", mesh.num_vertices(),
              params.range, mean_corr, t)};
}

// 4. Gradient of the log-likelihood against central differences.
Outcome gradient() {
  const auto t0 = Clock::now();
  Rng rng(77);
  MeshParams mp;
  mp.cutoff = 0.3;
  mp.max_edge = {1.0, 2.5};
  mp.offset = {1.0, 3.0};
  const auto mesh = std::make_shared<const Mesh2d>(build_mesh_2d(make_rectangle(0, 0, 8, 8), mp));
  const auto spde = std::make_shared<const SpdeModel>(spde_model(*mesh, pc(10, 0.99, 1, 0.01)));
  auto pts = [&](int n) {
    std::vector<Point2> p;
    for (int i = 0; i < n; ++i) p.push_back({rng.uniform(0, 8), rng.uniform(0, 8)});
    return p;
  };
  const ModelSpec m(mesh,
                    {ComponentDef::intercept("a0"), ComponentDef::intercept("a1"), ComponentDef::field("shared", spde),
                     ComponentDef::field("specific", spde)},
                    {{"controls", pts(80), make_rectangle(0, 0, 8, 8), {"a0", "shared"}},
                     {"cases", pts(30), make_rectangle(0, 0, 8, 8), {"a1", "shared", "specific"}}});
  Eigen::VectorXd x(m.latent_dim());
  for (auto& v : x) v = 0.5 * rng.normal();
  x[0] = std::log(80.0 / 64.0);
  x[1] = std::log(30.0 / 64.0);
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
  const double t = since(t0);
  return {worst < 1e-6 && t < 10.0,
          fmt("%ld coordinates, max relative error %.2e (< 1e-6); %.2f s (< 10 s)", static_cast<long>(x.size()), worst, t)};
}

// 5. Gaussian observations of an SPDE field: Newton against the closed form.
class GaussianObs final : public LatentLikelihood {
 public:
  GaussianObs(SpMat b, Eigen::VectorXd y, double prec) : b_(std::move(b)), y_(std::move(y)), prec_(prec) {}
  int latent_dim() const override { return static_cast<int>(b_.cols()); }
  double loglik(const Eigen::VectorXd& x) const override { return -0.5 * prec_ * (y_ - b_ * x).squaredNorm(); }
  void grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SpMat& neg_hess) const override {
    grad = prec_ * (b_.transpose() * (y_ - b_ * x));
    neg_hess = prec_ * SpMat(b_.transpose() * b_);
  }

 private:
  SpMat b_;
  Eigen::VectorXd y_;
  double prec_;
};

Outcome conjugate() {
  const auto t0 = Clock::now();
  Rng rng(5);
  MeshParams mp;
  mp.cutoff = 0.2;
  mp.max_edge = {0.8, 2.0};
  mp.offset = {1.0, 3.0};
  const Mesh2d mesh = build_mesh_2d(make_rectangle(0, 0, 6, 6), mp);
  std::vector<Point2> pts;
  Eigen::VectorXd y(150);
  for (int i = 0; i < 150; ++i) {
    pts.push_back({rng.uniform(0, 6), rng.uniform(0, 6)});
    y[i] = std::sin(pts.back().x) + 0.3 * rng.normal();
  }
  const SpMat b = basis_eval(mesh, pts);
  const double prec = 1.0 / 0.09;
  const MaternParams mpar{2.0, 1.0, 2};
  const SpMat q = precision_alpha2(assemble_fem(mesh), mpar.kappa(), mpar.tau());
  const GaussianObs lik(b, y, prec);
  const LatentGaussian lg = inner_newton(lik, q, SpMat(0, q.rows()), Eigen::VectorXd(0));

  const Eigen::MatrixXd post = Eigen::MatrixXd(q) + prec * Eigen::MatrixXd(b.transpose() * b);
  const Eigen::VectorXd mean = post.ldlt().solve(prec * (Eigen::MatrixXd(b.transpose()) * y));
  const double mean_err = (lg.mode - mean).norm() / mean.norm();
  const double prec_err = (Eigen::MatrixXd(lg.precision) - post).norm() / post.norm();
  const double t = since(t0);
  return {mean_err < 1e-8 && prec_err < 1e-8 && t < 5.0,
          fmt("mean rel. error %.2e, precision rel. error %.2e (< 1e-8); %.2f s (< 5 s)", mean_err, prec_err, t)};
}

// 6. Fit to simulated LGCPs with range 3 and sigma 0.8 on 20 x 20 km.
Outcome simulation_recovery() {
  const auto t0 = Clock::now();
  const Polygon window = make_rectangle(0, 0, 20, 20);
  MeshParams sim_mp;
  sim_mp.cutoff = 0.2;
  sim_mp.max_edge = {0.5, 2.0};
  sim_mp.offset = {1.0, 6.0};
  const Mesh2d sim_mesh = build_mesh_2d(window, sim_mp);
  MeshParams fit_mp;
  fit_mp.cutoff = 0.3;
  fit_mp.max_edge = {1.0, 3.0};
  fit_mp.offset = {1.0, 6.0};
  const auto mesh = std::make_shared<const Mesh2d>(build_mesh_2d(window, fit_mp));
  // Default field prior of the model menu.
  const RunConfig defaults;
  const auto spde = std::make_shared<const SpdeModel>(
      spde_model(*mesh, pc(defaults.field_prior.range.value, defaults.field_prior.range.prob,
                           defaults.field_prior.sigma.value, defaults.field_prior.sigma.prob)));
  int hits = 0;
  std::ostringstream rows;
  for (int rep = 0; rep < 10; ++rep) {
    SimScenario scn;
    scn.sampler = window;
    scn.intercept = 0.0;
    scn.field = FieldSpec{3.0, 0.8};
    scn.seed = derive_seed(6060, static_cast<std::uint64_t>(rep));
    const SimResult sim = simulate_lgcp(scn, sim_mesh);
    const ModelSpec spec(mesh, {ComponentDef::intercept("alpha"), ComponentDef::field("field", spde)},
                         {{"sim", sim.points, window, {"alpha", "field"}}});
    const FitResult f = fit(spec, spec);
    const double r = std::exp(f.hyper.mode[0]), s = std::exp(f.hyper.mode[1]);
    const bool ok = r >= 1.5 && r <= 6.0 && s >= 0.4 && s <= 1.6;
    hits += ok;
    rows << fmt(" [%zu pts r=%.2f s=%.2f%s]", sim.points.size(), r, s, ok ? "" : " miss");
  }
  const double t = since(t0);
  return {hits >= 8 && t < 600.0, fmt("%d/10 replicates within [truth/2, 2 truth] (>= 8); %.1f s (< 600 s);", hits, t) +
                                      rows.str()};
}

// Prior precision of the linear distance coefficient in criterion 7.
double g_linear_precision = RunConfig{}.linear_precision;

// 7. Contaminated fixture: 5 extra cases around the incinerator.
Outcome contamination() {
  const auto t0 = Clock::now();
  RunConfig cfg = chorley_config(ModelTag::LinearDist, fs::temp_directory_path() / "lgcp_acceptance_c7");
  cfg.linear_precision = g_linear_precision;
  Dataset data = ingest(cfg);
  data.cases = inject_cluster(std::move(data.cases), kIncinerator, 5, 0.5, data.boundary, 1990);
  const auto mesh = build_mesh(cfg, data);
  std::ostringstream detail;
  detail << data.controls.size() << " controls, " << data.cases.size() << " cases;";
  bool ok = data.controls.size() == 978 && data.cases.size() == 63;

  auto run = [&](ModelTag tag) {
    cfg.model = tag;
    const BuiltModel m = build_model(cfg, data, mesh);
    FitOptions opts;
    opts.threads = cfg.threads;
    const FitResult f = fit(*m.spec, *m.spec, opts);
    const DrawSet draws = draw_latent(f, cfg.n_samples, derive_seed(cfg.seed, 1), cfg.threads);
    return std::make_pair(EffectCurve(effect_curve(draws, *m.spec, "dist", {0.5})), draws.x.col(m.spec->block_offset(m.spec->component_index("dist"))).eval());
  };
  {
    const auto [curve, beta] = run(ModelTag::LinearDist);
    const double p_neg = (beta.array() < 0.0).cast<double>().mean();
    ok &= p_neg > 0.9;
    detail << fmt(" linear (prior precision %g) P(beta < 0) = %.3f (> 0.9), beta mean %.4f;", cfg.linear_precision,
                  p_neg, beta.mean());
  }
  for (const auto tag : {ModelTag::Spde1dDist, ModelTag::Rw2Dist}) {
    const auto [curve, coef] = run(tag);
    ok &= curve.lower[0] > 0.0;
    detail << fmt(" %s effect at 0.5 km %.3f [%.3f, %.3f] (lower > 0);", to_string(tag).c_str(), curve.mean[0],
                  curve.lower[0], curve.upper[0]);
  }
  const double t = since(t0);
  ok &= t < 600.0;
  detail << fmt(" %.1f s (< 600 s)", t);
  return {ok, detail.str()};
}

// 8-10 share the Chorley shared+specific runs.
struct ChorleyRuns {
  RunReport full;
  double full_seconds = 0.0;
  nlohmann::json field_ranges;
};

ChorleyRuns& chorley_full() {
  static ChorleyRuns runs = [] {
    ChorleyRuns r;
    const RunConfig cfg = chorley_config(ModelTag::SharedSpecific, fs::temp_directory_path() / "lgcp_acceptance_full");
    const auto t0 = Clock::now();
    r.full = run_pipeline(cfg, Stage::All);
    r.full_seconds = since(t0);
    std::ifstream in(cfg.output_dir / "manifest.json");
    r.field_ranges = nlohmann::json::parse(in)["field_mean_range"];
    return r;
  }();
  return runs;
}

Outcome shared_vs_specific() {
  const ChorleyRuns& r = chorley_full();
  const double shared = r.field_ranges["shared"], specific = r.field_ranges["specific"];
  return {specific < shared && r.full_seconds < 600.0,
          fmt("posterior-mean range over the sampler: specific %.4f < shared %.4f; %.1f s (< 600 s)", specific, shared,
              r.full_seconds)};
}

Outcome determinism() {
  const ChorleyRuns& r = chorley_full();
  const auto t0 = Clock::now();
  std::vector<std::string> dumps;
  for (const char* name : {"lgcp_acceptance_det_a", "lgcp_acceptance_det_b"}) {
    const RunConfig cfg = chorley_config(ModelTag::SharedSpecific, fs::temp_directory_path() / name);
    dumps.push_back(run_pipeline(cfg, Stage::Fit).summaries.dump());
  }
  const double t = since(t0);
  const bool same = dumps[0] == dumps[1] && dumps[0] == r.full.summaries.dump();
  return {same && t < 2.0 * r.full_seconds,
          fmt("fit summaries %s across three runs (%zu bytes); two reruns %.1f s (< 2 x %.1f s)",
              same ? "bit-identical" : "DIFFER", dumps[0].size(), t, r.full_seconds)};
}

Outcome runtime() {
  const ChorleyRuns& r = chorley_full();
  return {r.full_seconds < 600.0, fmt("full shared+specific pipeline %.1f s (< 600 s; fit %.1f s), %zu outputs",
                                      r.full_seconds, r.full.fit_seconds, r.full.outputs.size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  std::vector<int> expect_fail;
  app.add_option("--expect-fail", expect_fail, "Criteria known to fail")->delimiter(',');
  std::string report_path;
  app.add_option("--report", report_path, "Also write the result lines to this file");
  app.add_option("--linear-precision", g_linear_precision, "Prior precision of the linear distance coefficient");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"data fidelity", data_fidelity},
      {"homogeneous sanity", homogeneous},
      {"Matern recovery", matern_recovery},
      {"gradient correctness", gradient},
      {"conjugate exactness", conjugate},
      {"simulation recovery", simulation_recovery},
      {"contamination experiment", contamination},
      {"shared vs specific structure", shared_vs_specific},
      {"determinism", determinism},
      {"end-to-end runtime", runtime},
  };
  std::set<int> failed;
  std::ofstream report;
  if (!report_path.empty()) report.open(report_path);
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) failed.insert(id);
    std::ostringstream line;
    line << (o.pass ? "[PASS] " : "[FAIL] ") << id << ". " << criteria[i].first << ": " << o.detail;
    std::cout << line.str() << std::endl;
    if (report) report << line.str() << "\n";
  }
  std::set<int> expected;
  for (const int id : expect_fail)
    if (selected.empty() || selected.count(id)) expected.insert(id);
  std::ostringstream tally;
  tally << failed.size() << " criteria failed";
  if (!expected.empty()) tally << " (" << expected.size() << " expected)";
  std::cout << tally.str() << std::endl;
  if (report) report << tally.str() << "\n";
  return failed == expected ? 0 : 1;
}
