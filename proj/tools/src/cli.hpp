#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace texsds::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,        // bad config file, arguments or ablation axis
  kMesh = 3,          // unreadable mesh, overlapping atlas, corrupt checkpoint
  kBackend = 4,       // guidance service unreachable, failing or off-protocol
  kNumeric = 5,       // NaN/Inf during optimization
};

/// Runs `texsds <args...>` (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace texsds::cli
