#pragma once

namespace kgcnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Parses argv, runs one subcommand and returns the process exit code.
int dispatch(int argc, const char* const* argv);

}  // namespace kgcnn::cli
