// SPDX-License-Identifier: Apache-2.0
// Entry point of the snri command-line tool.
#pragma once

#include <ostream>

namespace snri::cli {

/// Parses argv and runs one subcommand. User errors print a one-line message
/// to `err` and return a nonzero code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace snri::cli
