#pragma once

#include <string>
#include <vector>

namespace ktrace {

inline constexpr const char* kToolVersion = "0.1.0";

/// Entry point behind the ktrace binary. args excludes the program name.
/// Returns the process exit status; 0 iff all artifacts were written.
int run_command(const std::vector<std::string>& args);

}  // namespace ktrace
