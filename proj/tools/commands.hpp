#ifndef CAPEVAL_TOOLS_COMMANDS_HPP
#define CAPEVAL_TOOLS_COMMANDS_HPP

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace capeval::cli {

/// Exit codes: 0 success, 2 usage/input error, 3 data error, 4 numeric error.
enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

/// Runs the command line `args` (args[0] is the program name). Normal output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace capeval::cli

#endif  // CAPEVAL_TOOLS_COMMANDS_HPP
