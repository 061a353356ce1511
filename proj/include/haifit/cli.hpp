#pragma once

namespace haifit {

inline constexpr int kExitUsage = 2;

/// Entry point for the haifit tool: train, eval, infer, serve, synth-data.
/// Returns 0 on success, 2 on usage errors and 1 on any other failure,
/// after printing a single-line error to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace haifit
