#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace seqtag {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;     // usage or I/O error
inline constexpr int kExitDiverged = 2;  // training produced a non-finite loss

// Runs the command line `args` (without the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seqtag
