#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cosmix::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kNumericFailure = 3,
    kInterrupted = 130,
};

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Entry point for main(); installs a SIGINT handler for `adapt`.
int run_main(int argc, char** argv);

}  // namespace cosmix::cli
