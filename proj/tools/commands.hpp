#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace regcal::cli {

//! Exit codes: 0 success, 2 bad input (flags, files, schema), 1 anything
//! else. Files written by a failing command are removed.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

//! `args` excludes the program name, e.g. {"calibrate", "--input", "a.csv"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

//! Parses `key = value` lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

} // namespace regcal::cli
