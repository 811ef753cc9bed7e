#pragma once

#include <ostream>

namespace rssa {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  /// synthesize: best feasible rate < 1.
  kExitNotCertified = 2,
  /// simulate: phi0 > 0 with a filter on and the true parameter inside the modeled support.
  kExitUnsafe = 3,
};

/// The rssa command-line tool: synthesize, simulate, feasmap, fistudy, bench.
/// Settings come from defaults, then `--config FILE`, then flags. Outputs are
/// written to the `--out` directory, which must exist.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rssa
