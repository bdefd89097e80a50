#include "relcat/logging.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

#include "relcat/errors.hpp"

namespace relcat {

void configure_logging() {
  if (!spdlog::get("relcat")) spdlog::set_default_logger(spdlog::stderr_color_st("relcat"));
  const char* raw = std::getenv("RELCAT_LOG");
  const std::string level = raw ? raw : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw ConfigError("RELCAT_LOG must be one of error, info, debug; got '" + level + "'");
  }
}

}  // namespace relcat
