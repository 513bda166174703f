#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prism::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // anything not covered below
  kExitConfig = 2,   // bad flags, config values or too few trials
  kExitNumeric = 3,  // NaN/Inf during training or evaluation
  kExitIo = 4,       // unreadable or inconsistent files
  kExitStudyFailed = 5,
};

/// Runs one command line (args[0] is the program name) and returns its exit
/// code. Progress goes to `out`, diagnostics to `err`.
///
///   prism train --config FILE [--set sec.key=val]... [--seed N] [--out DIR]
///   prism eval --checkpoint [NAME=]PATH... [--config FILE] [--selection R]... [--dropout D]...
///   prism study {favor-variance|quantile-variance|latency-scaling|coverage} [--trials N]
///   prism inspect CHECKPOINT
///
/// Run directories go under $PRISM_OUTPUT_ROOT (default ./runs) unless --out
/// is given; each holds one manifest.json listing every file written.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prism::cli
