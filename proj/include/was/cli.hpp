#pragma once

namespace was::cli {

// Entry point behind the `was` binary. Returns the process exit code:
// 0 success, 2 invalid config/usage, 3 non-finite loss, 1 unexpected error.
int cli_main(int argc, const char* const* argv);

}  // namespace was::cli
