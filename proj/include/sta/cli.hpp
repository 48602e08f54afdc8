#pragma once

#include <iostream>

namespace sta {

// Environment variable that roots every relative output path.
inline constexpr const char* kOutRootEnv = "STA_OUT_ROOT";

// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace sta
