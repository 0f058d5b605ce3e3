#ifndef DWCAPS_CLI_HPP_
#define DWCAPS_CLI_HPP_

namespace dwcaps {

// Command-line entry point. Exit codes: 0 success, 1 usage error,
// 2 runtime error.
int run_cli(int argc, const char* const* argv);

}  // namespace dwcaps

#endif  // DWCAPS_CLI_HPP_
