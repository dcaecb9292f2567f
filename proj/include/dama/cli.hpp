#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dama {

/// Entry point behind the `dama` binary. `args` excludes the program name.
/// Returns 0 on success, 1 for user/input errors, 2 for internal failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dama
