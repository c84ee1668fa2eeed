#pragma once

namespace sbp {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Entry point of `sbp train|eval|prune|report`.
int run_cli(int argc, char** argv);

}  // namespace sbp
