#pragma once

#include <string>
#include <vector>

namespace wdyn::cli {

inline constexpr const char* kVersion = "0.1.0";

// Runs one subcommand. `args` excludes the program name. Returns 0 on success,
// 1 on usage errors (usage text goes to stderr) and 2 on data errors.
int dispatch(const std::vector<std::string>& args);

} // namespace wdyn::cli
