#ifndef PMLE_ERRORS_HPP
#define PMLE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pmle {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Preconditions violated by the caller (dimension mismatches and the like).
struct ContractViolation : Error {
  using Error::Error;
};

// A model was asked for an optional capability it does not provide. Raised at
// run-configuration time, never mid-chain.
struct UnsupportedCapability : Error {
  using Error::Error;
};

struct SingularHessianError : Error {
  using Error::Error;
};

// Non-finite state detected during a run; carries the step that produced it.
struct DivergenceError : Error {
  DivergenceError(const std::string& what, long step_index)
      : Error(what + " (step " + std::to_string(step_index) + ")"), step(step_index) {}
  long step;
};

struct OracleError : Error {
  using Error::Error;
};

struct DataError : Error {
  explicit DataError(const std::string& what, long line_number = -1)
      : Error(line_number >= 0 ? what + " (line " + std::to_string(line_number) + ")" : what),
        line(line_number) {}
  long line;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace pmle

#endif  // PMLE_ERRORS_HPP
