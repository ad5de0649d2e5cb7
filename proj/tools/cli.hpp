#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ttc::cli {

// Exit codes are part of the CLI contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;     // usage or configuration error
inline constexpr int kExitPartial = 2;   // sweep finished with pending trials
inline constexpr int kExitMismatch = 3;  // replay verification found a difference

// Each command takes its arguments without the program and subcommand names.
int cmd_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_analyze(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_verify(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Dispatches `ttc <subcommand> ...`; argv[0] is the program name.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ttc::cli
