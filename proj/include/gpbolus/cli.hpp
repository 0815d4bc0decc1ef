#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gpbolus::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInvalid = 3;

/// `args[0]` is the program name. Subcommands: collect, train, simulate,
/// evaluate, recommend, replay, serve.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gpbolus::app
