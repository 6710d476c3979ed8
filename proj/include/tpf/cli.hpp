#pragma once

namespace tpf::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;
inline constexpr int kNumericalError = 3;

int run(int argc, char** argv);

} // namespace tpf::cli
