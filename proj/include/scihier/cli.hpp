#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scihier {

/// Entry point of the `scihier` command-line tool. Subcommands: ingest,
/// extract, embed, build, flmsci, eval, stats, serve; global flags --seed,
/// --mock, --config. Returns the process exit status (0 on success). Errors
/// are reported on `err`, never thrown.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace scihier
