#pragma once

// The `adda` command line: synth, pretrain, adapt, eval, divergence,
// export-features and sweep-l.

#include <ostream>

namespace adda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 2;

// Parses argv and runs one subcommand. Help text and summaries go to `out`,
// a one-line diagnostic to `err` on failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace adda::cli
