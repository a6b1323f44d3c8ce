#pragma once

#include <memory>

#include <spdlog/logger.h>

namespace lgcp {

// Shared project logger. The level is read once from the LGCP_LOG environment
// variable (trace, debug, info, warn, error, off); default is warn.
std::shared_ptr<spdlog::logger> logger();

}  // namespace lgcp
