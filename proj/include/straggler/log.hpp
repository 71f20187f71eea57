// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace straggler {

// Shared stderr logger. Level comes from STRAGGLER_LOG (trace, debug, info,
// warn, error, off); defaults to warn.
inline spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("straggler");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("STRAGGLER_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return l;
  }();
  return *logger;
}

}  // namespace straggler
