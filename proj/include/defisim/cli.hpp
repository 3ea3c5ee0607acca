#pragma once

#include <string>
#include <vector>

namespace defisim {

/// Entry point behind the `defisim` binary. Exit codes: 0 success,
/// 1 validation/input error, 2 usage error.
int run_cli(const std::vector<std::string>& args);

} // namespace defisim
