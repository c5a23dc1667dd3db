#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace htrkit::cli {

inline constexpr const char* kVersion = "1.0.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kPartialFailure = 1;
inline constexpr int kUsageError = 2;

/// Entry point for `htrkit <subcommand> ...`. Data goes to `out`,
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace htrkit::cli
