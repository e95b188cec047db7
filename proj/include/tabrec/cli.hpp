#pragma once

namespace tabrec {

// Command-line entry point. Subcommands: simulate, fit, ppc, coverage,
// summarize. Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical error.
int run_cli(int argc, const char* const* argv);

}  // namespace tabrec
