#pragma once

#include <stdexcept>
#include <string>

namespace hazeforge {

// Error taxonomy shared by the whole library. The CLI maps these onto its
// exit codes (usage = 1, runtime/IO = 2, failed verification = 3).

// Operand shapes disagree or an operation cannot produce a well-formed shape.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A stated precondition on argument values was violated.
struct PreconditionError : std::runtime_error {
  explicit PreconditionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A configuration object or file is invalid.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// An API contract was broken (e.g. backward on a non-scalar loss).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values surfaced where the pipeline requires finite math.
struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hazeforge
