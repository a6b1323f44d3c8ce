#include "lgcp/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace lgcp {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto log = spdlog::stderr_color_mt("lgcp");
    log->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("LGCP_LOG")) {
      log->set_level(spdlog::level::from_str(env));
    }
    log->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    return log;
  }();
  return instance;
}

}  // namespace lgcp
