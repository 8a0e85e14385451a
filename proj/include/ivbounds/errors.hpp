#pragma once

#include <stdexcept>
#include <string>

namespace ivbounds {

// Error taxonomy. Configuration/usage mistakes, malformed or degenerate data,
// and internal solver breakdown map to distinct process exit codes in the CLI;
// an infeasible program is a reported finding, not an exception.

// Invalid option values, contradictory settings, refusing to overwrite output.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file. `line` is 1-based (header row is line 1).
struct ParseError : std::runtime_error {
  long line;
  ParseError(const std::string& what, long line_no)
      : std::runtime_error(what + " (line " + std::to_string(line_no) + ")"),
        line(line_no) {}
};

// Structurally valid input that cannot support the requested computation:
// fewer than two instrument levels, an empty treatment stratum, an
// instrument with no variation in the propensity.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Internal numerical failure (simplex cycling guard tripped, inconsistent
// dual recovery). Must not be conflated with an infeasibility finding.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ivbounds
