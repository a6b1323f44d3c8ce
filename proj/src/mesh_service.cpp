#include "lgcp/mesh_service.hpp"

#include <algorithm>
#include <chrono>

#include "lgcp/error.hpp"
#include "lgcp/io.hpp"
#include "lgcp/log.hpp"
#include "lgcp/mesh.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen.
#include <httplib.h>

namespace lgcp {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMeshFields[] = {"cutoff", "max_edge", "min_angle", "offset", "n_initial"};

ServiceResponse bad_request(const std::string& field, const std::string& message) {
  return {400, {{"error", message}, {"field", field}}};
}

struct FieldError {
  std::string field, message;
};

double number(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw FieldError{key, std::string("'") + key + "' must be a number"};
  return v.get<double>();
}

template <class T>
std::array<T, 2> pair(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw FieldError{key, std::string("'") + key + "' must be a two-element numeric array"};
  if constexpr (std::is_integral_v<T>) {
    if (!v[0].is_number_integer() || !v[1].is_number_integer())
      throw FieldError{key, std::string("'") + key + "' must hold integers"};
  }
  return {v[0].get<T>(), v[1].get<T>()};
}

bool valid_fixture_name(const std::string& name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

}  // namespace

std::vector<std::string> list_fixtures(const fs::path& dir) {
  std::vector<std::string> out;
  std::error_code ec;
  if (dir.empty() || !fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir, ec))
    if (entry.is_directory() && fs::is_regular_file(entry.path() / "boundary.geojson"))
      out.push_back(entry.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

ServiceResponse handle_mesh_request(const std::string& body, const MeshServiceOptions& opts) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return bad_request("body", std::string("request is not valid JSON: ") + e.what());
  }
  if (!req.is_object()) return bad_request("body", "request must be a JSON object");
  for (const auto& [k, v] : req.items()) {
    const bool known = k == "boundary" || k == "fixture" ||
                       std::find(std::begin(kMeshFields), std::end(kMeshFields), k) != std::end(kMeshFields);
    if (!known) return bad_request(k, "unknown field '" + k + "'");
  }

  Polygon boundary;
  if (req.contains("fixture")) {
    if (req.contains("boundary")) return bad_request("boundary", "give either 'boundary' or 'fixture', not both");
    if (!req["fixture"].is_string()) return bad_request("fixture", "'fixture' must be a string");
    const std::string name = req["fixture"];
    const auto names = list_fixtures(opts.fixtures_dir);
    if (!valid_fixture_name(name) || std::find(names.begin(), names.end(), name) == names.end())
      return {404, {{"error", "unknown fixture '" + name + "'"}, {"field", "fixture"}}};
    try {
      boundary = read_geojson_polygon(opts.fixtures_dir / name / "boundary.geojson");
    } catch (const Error& e) {
      return {500, {{"error", e.what()}}};
    }
  } else if (req.contains("boundary")) {
    try {
      boundary = polygon_from_geojson(req["boundary"]);
    } catch (const Error& e) {
      return bad_request("boundary", e.what());
    } catch (const nlohmann::json::exception& e) {
      return bad_request("boundary", std::string("malformed boundary: ") + e.what());
    }
  } else {
    return bad_request("boundary", "one of 'boundary' or 'fixture' is required");
  }

  MeshParams params;
  try {
    if (req.contains("cutoff")) params.cutoff = number(req, "cutoff");
    if (req.contains("max_edge")) params.max_edge = pair<double>(req, "max_edge");
    if (req.contains("min_angle")) params.min_angle = number(req, "min_angle");
    if (req.contains("offset")) params.offset = pair<double>(req, "offset");
    if (req.contains("n_initial")) params.n_initial = pair<int>(req, "n_initial");
  } catch (const FieldError& e) {
    return bad_request(e.field, e.message);
  }
  try {
    params.validate();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    std::string field = "params";
    for (const char* f : kMeshFields)
      if (msg.find(f) != std::string::npos) {
        field = f;
        break;
      }
    return bad_request(field, msg);
  }

  MeshBuildOptions build;
  build.deadline = std::chrono::steady_clock::now() +
                   std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(opts.timeout_seconds));
  try {
    const Mesh2d mesh = build_mesh_2d(boundary, params, build);
    nlohmann::json out = mesh_to_json(mesh, opts.max_triangles);
    out["params"] = {{"cutoff", params.cutoff},
                     {"max_edge", params.max_edge},
                     {"min_angle", params.min_angle},
                     {"offset", params.offset},
                     {"n_initial", params.n_initial}};
    return {200, out};
  } catch (const MeshTimeout& e) {
    return {504, {{"error", e.what()}, {"timeout_seconds", opts.timeout_seconds}}};
  } catch (const MeshError& e) {
    return {422, {{"error", e.what()}}};
  } catch (const GeometryError& e) {
    return bad_request("boundary", e.what());
  }
}

MeshService::MeshService(MeshServiceOptions opts) : opts_(std::move(opts)), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.Get("/fixtures", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"fixtures", list_fixtures(opts_.fixtures_dir)}}.dump(), "application/json");
  });
  s.Post("/mesh", [this](const httplib::Request& req, httplib::Response& res) {
    const ServiceResponse r = handle_mesh_request(req.body, opts_);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  });
  if (!opts_.static_dir.empty()) s.set_mount_point("/", opts_.static_dir.string());
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    }
    logger()->error("request failed: {}", what);
    res.status = 500;
    res.set_content(nlohmann::json{{"error", what}}.dump(), "application/json");
  });
}

MeshService::~MeshService() { stop(); }

bool MeshService::bind() {
  if (opts_.port == 0) {
    const int p = server_->bind_to_any_port(opts_.host);
    if (p < 0) return false;
    port_ = p;
    return true;
  }
  if (!server_->bind_to_port(opts_.host, opts_.port)) return false;
  port_ = opts_.port;
  return true;
}

void MeshService::serve() {
  logger()->info("mesh service on http://{}:{}", opts_.host, port_.load());
  server_->listen_after_bind();
}

void MeshService::listen() {
  if (!bind()) throw ConfigError("cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
  serve();
}

void MeshService::stop() {
  if (server_) server_->stop();
}

}  // namespace lgcp
