#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "vjump/tcn.hpp"

namespace vjump {

inline constexpr std::string_view kToolVersion = "1.0.0";

/// Segmenter configurations selectable with --tcn-preset. "desk" trains in minutes on one
/// CPU core; "full" is the full-size network (library defaults).
MsTcnConfig tcn_preset(std::string_view name);

/// Runs one command line (program name excluded) and returns the process exit code:
/// 0 on success, 1 on usage or validation errors, 2 on I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vjump
