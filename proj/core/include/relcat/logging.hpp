#pragma once

#include <spdlog/spdlog.h>

namespace relcat {

// Applies RELCAT_LOG (error | info | debug) to the default spdlog logger.
// Unset means info; any other value is rejected with ConfigError.
void configure_logging();

}  // namespace relcat
