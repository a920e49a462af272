#pragma once

// Batch front-end. Subcommands: gen-demos | train | execute | evaluate |
// sphere. Exit 0 on success, 1 on usage/validation errors, 2 on runtime
// failures. All artifacts are deterministic for a given config + seed.

#include <span>
#include <string>

namespace servoscope::cli {

int run_command(std::span<const std::string> args);

// argv-style convenience wrapper used by main().
int run_command(int argc, const char* const* argv);

}  // namespace servoscope::cli
