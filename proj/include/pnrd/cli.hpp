#pragma once

namespace pnrd::cli {

/// Entry point of the `pnrd` command-line tool. Returns the process exit code.
int run(int argc, char** argv);

}  // namespace pnrd::cli
