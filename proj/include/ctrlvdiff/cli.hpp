#pragma once

#include <iosfwd>

namespace ctrlvdiff {

/// Exit codes: 0 success, 1 validation error or bad usage, 2 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctrlvdiff
