#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace defnet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitArtifact = 2;

/// `args` excludes the program name. A `--config FILE` anywhere after the
/// subcommand supplies `key = value` defaults that explicit flags override.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

/// "1-4" or "1,3" style lists.
std::vector<int> parse_int_list(const std::string& text);

/// Reads `key = value` lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path);

}  // namespace defnet
