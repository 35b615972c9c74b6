#pragma once

// Subcommands. Each returns the process exit code:
// 0 success, 1 input error, 2 solver failure or failed check.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"

#include "cpmp/integrate.hpp"

namespace cpmp::cli {

struct Options {
  /// Trajectory CSV path; nothing is written when empty.
  std::string out;
  /// JSON report path; the report goes to stdout when empty.
  std::string report;
  std::uint64_t seed = 0;
  /// Shooting tolerance and terminal-residual threshold.
  std::optional<double> tol;
  /// Fixed RK4 step count (gas piston: minimum number of adaptive steps).
  std::optional<int> steps;
  /// Constraint-algorithm depth.
  int depth = 4;
  std::optional<double> lambda0;
  /// Oracle intervals.
  int N = 32;
  /// Oracle: also run N/16, N/8, N/4, N/2 and report the gap sequence.
  bool refine = false;
};

int cmd_solve(const std::string& problem_path, const Options& opt, std::ostream& err);
int cmd_verify(const std::string& problem_path, const Options& opt, std::ostream& err);
int cmd_oracle(const std::string& problem_path, const Options& opt, std::ostream& err);
/// `config_path` may be empty for the default configuration.
int cmd_demo_gas_piston(const std::string& config_path, const Options& opt, std::ostream& err);

/// 17 significant digits, '\n' line endings; header is chart then diagnostics.
void write_csv(const Trajectory& tr, std::ostream& out);

}  // namespace cpmp::cli
