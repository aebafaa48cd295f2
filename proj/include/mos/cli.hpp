#pragma once

#include <string>
#include <vector>

namespace mos {

/// Entry point behind the `mos` binary. Returns the process exit code:
/// 0 success, 1 usage/configuration error, 2 data error, 3 numeric failure.
int run_cli(std::vector<std::string> args);

} // namespace mos
