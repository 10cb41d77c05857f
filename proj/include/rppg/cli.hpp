#pragma once

#include <string>
#include <vector>

namespace rppg {

// Command-line surface. Subcommands: synth, train, infer, baseline, eval,
// spectra. Returns 0 on success, 1 on usage or configuration errors, 2 on
// data or format errors, 3 on numeric failures.
int run_cli(const std::vector<std::string>& args);

}  // namespace rppg
