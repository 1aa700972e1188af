#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sflda::cli {

// Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure
// (including non-convergence unless --allow-nonconverged is given).
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

int run(int argc, const char* const* argv);
// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sflda::cli
