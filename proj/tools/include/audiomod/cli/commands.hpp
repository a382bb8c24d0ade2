#pragma once

#include <ostream>

#include "audiomod/errors.hpp"

namespace audiomod::cli {

// 0 success, 2 config, 3 data, 4 numeric abort, 1 anything else.
int exit_code(ErrorKind kind);

// One command-line invocation. Results go to `out` as JSON lines (plain
// "epoch lr" lines for lr-preview); a failure is a single JSON line on `err`
// and the matching exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace audiomod::cli
