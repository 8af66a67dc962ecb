#pragma once

#include <iosfwd>

namespace graftcert::cli {

// Exit codes of the command-line tool.
enum Exit : int { kOk = 0, kUnknownDominated = 1, kConfigError = 2, kIoError = 3 };

// Runs `graftcert <subcommand> [flags]`. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace graftcert::cli
