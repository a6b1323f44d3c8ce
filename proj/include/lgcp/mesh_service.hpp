#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace httplib {
class Server;
}

namespace lgcp {

struct MeshServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  // Each subdirectory holding a boundary.geojson is a fixture.
  std::filesystem::path fixtures_dir;
  // Optional static bundle served under "/".
  std::filesystem::path static_dir;
  double timeout_seconds = 5.0;
  std::string cors_origin = "*";
  std::size_t max_triangles = 200000;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

// Socket-free handlers, used by the server and by tests.
std::vector<std::string> list_fixtures(const std::filesystem::path& dir);
ServiceResponse handle_mesh_request(const std::string& body, const MeshServiceOptions& opts);

class MeshService {
 public:
  explicit MeshService(MeshServiceOptions opts);
  ~MeshService();
  MeshService(const MeshService&) = delete;
  MeshService& operator=(const MeshService&) = delete;

  // Binds and serves until stop(). Port 0 picks a free port; see port().
  void listen();
  // Binds without serving; returns false when the address is taken.
  bool bind();
  void serve();
  void stop();
  int port() const { return port_; }

 private:
  MeshServiceOptions opts_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<int> port_{0};
};

}  // namespace lgcp
