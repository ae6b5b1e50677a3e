#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pan::cli {

// Exit codes returned by run().
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericalError = 4;

// Entry point shared by the pansim binary and the in-process tests.
// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pan::cli
