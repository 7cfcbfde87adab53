#pragma once

#include <string>
#include <vector>

namespace binembed::cli {

/// Dispatches one subcommand (frontend, distill, embed, probe, bench,
/// sweep, size, inspect, synth-data). Returns the process exit code:
/// 0 success, 2 configuration error, 3 data/I-O error, 4 numeric failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace binembed::cli
