#pragma once

namespace steerq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitConfig = 2;  ///< bad config, bad flags or I/O failure
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitStateCap = 4;

/// Entry point of the `steerq` executable; returns the process exit code.
int run(int argc, char** argv);

}  // namespace steerq::cli
