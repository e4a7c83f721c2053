#pragma once

#include <spdlog/spdlog.h>

namespace nfer {

/// Shared logger. Level comes from NFER_LOG_LEVEL (trace|debug|info|warn|error|off),
/// default warn.
spdlog::logger& logger();

}  // namespace nfer
