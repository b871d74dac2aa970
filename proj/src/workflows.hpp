#pragma once

// Subcommand drivers behind the command line. Each command maps one config
// file to one experiment, writes every artifact under a single output
// directory, and finishes with a manifest.txt naming each output file next
// to a checksum of its bytes, so replays can be compared at a glance.

#include <iosfwd>
#include <string>
#include <vector>

namespace rmas {

// Command usage summary, one line per subcommand and flag.
std::string usage_text();

// Runs one subcommand; args holds the tokens after the program name, the
// subcommand first. Normal output goes to `out`, problems to `err`.
// Returns the process exit status: 0 success, 1 usage or validation
// problem, 2 runtime failure.
int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

}  // namespace rmas
