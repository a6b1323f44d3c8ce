// Command-line entry point: mesh, fit, predict, simulate and serve.

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "lgcp/config.hpp"
#include "lgcp/error.hpp"
#include "lgcp/log.hpp"
#include "lgcp/mesh_service.hpp"
#include "lgcp/pipeline.hpp"

namespace {

lgcp::MeshService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Log-Gaussian Cox process models for case-control point patterns"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "Run configuration (TOML)");
  app.add_option("--seed", seed, "Override inference.seed");
  app.add_option("--out", out_dir, "Override output.dir");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* mesh = app.add_subcommand("mesh", "Build the mesh and write mesh.json");
  auto* fit = app.add_subcommand("fit", "Fit the model and write summaries, surfaces and curves");
  auto* predict = app.add_subcommand("predict", "Recompute surfaces and curves from a saved fit");
  auto* simulate = app.add_subcommand("simulate", "Simulate patterns or inject a cluster");
  std::string scenario_path;
  simulate->add_option("--scenario", scenario_path, "Scenario file (TOML)")->required();
  bool fit_only = false;
  fit->add_flag("--no-predict", fit_only, "Stop after writing fit.json");

  auto* serve = app.add_subcommand("serve", "Run the mesh service");
  lgcp::MeshServiceOptions service;
  service.fixtures_dir = std::filesystem::path(LGCP_SOURCE_DIR) / "data";
  serve->add_option("--host", service.host, "Bind address")->capture_default_str();
  serve->add_option("--port", service.port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--fixtures", service.fixtures_dir, "Fixture directory")->capture_default_str();
  serve->add_option("--static", service.static_dir, "Static UI bundle served at /");
  serve->add_option("--timeout", service.timeout_seconds, "Mesh deadline in seconds")->capture_default_str();
  serve->add_option("--cors-origin", service.cors_origin, "Access-Control-Allow-Origin value")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(lgcp::ExitCode::Config);
  }

  try {
    if (serve->parsed()) {
      lgcp::MeshService svc(service);
      if (!svc.bind()) throw lgcp::ConfigError("cannot bind " + service.host + ":" + std::to_string(service.port));
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << service.host << ":" << svc.port() << std::endl;
      svc.serve();
      g_service = nullptr;
      return 0;
    }

    if (config_path.empty()) throw lgcp::ConfigError("--config is required");
    lgcp::RunConfig cfg = lgcp::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (!out_dir.empty()) cfg.output_dir = std::filesystem::absolute(out_dir).lexically_normal();

    lgcp::RunReport report;
    if (simulate->parsed()) {
      report = lgcp::run_simulate(cfg, lgcp::load_scenario(scenario_path));
    } else {
      const lgcp::Stage stage = mesh->parsed()                 ? lgcp::Stage::Mesh
                                : predict->parsed()            ? lgcp::Stage::Predict
                                : fit->parsed() && fit_only    ? lgcp::Stage::Fit
                                                               : lgcp::Stage::All;
      report = lgcp::run_pipeline(cfg, stage);
    }
    std::cout << "wrote " << report.outputs.size() << " files to " << report.output_dir.string() << " in "
              << report.total_seconds << " s";
    if (report.fit_seconds > 0) std::cout << " (fit " << report.fit_seconds << " s)";
    std::cout << '\n';
    return 0;
  } catch (const lgcp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(lgcp::ExitCode::Numerical);
  }
}
