// The command-line surface: subcommand dispatch, JSON experiment configs
// (versioned, unknown keys rejected), run manifests, and the experiment
// drivers behind each subcommand.

#pragma once

namespace iclab::harness {

// Parses argv and runs one subcommand. Returns the process exit code:
// 0 success, 2 validation/configuration error, 3 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace iclab::harness
