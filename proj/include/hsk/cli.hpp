#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hsk {

/// Runs the benchmark command line with args excluding the program name.
/// Returns 0 on success, 1 on validation or I/O failure, 2 on solver nonconvergence.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hsk
