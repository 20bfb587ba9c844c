#pragma once

#include <stdexcept>
#include <string>

namespace tavi {

// Error taxonomy shared by every subsystem. The CLI maps ConfigError to exit
// code 1 and everything else thrown from a run to exit code 2.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent configuration supplied by the caller.
struct ConfigError : Error {
  using Error::Error;
};

// Tensor or matrix shape mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Missing or unusable data (bad files, empty trajectories, degenerate input).
struct DataError : Error {
  using Error::Error;
};

// A numeric operation produced a non-finite value or hit a numeric limit.
struct NumericError : Error {
  using Error::Error;
};

// Backward invoked on a graph that was already consumed.
struct StaleGraphError : Error {
  using Error::Error;
};

// Scripted planner could not produce an action sequence for the given pose.
struct PlanningError : Error {
  using Error::Error;
};

}  // namespace tavi
