#pragma once

#include <stdexcept>
#include <string>

namespace servoscope {

// Invalid configuration value or inconsistent setup (bad layer chain,
// alpha out of range, unknown task, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dimension mismatch between values that must be shape-congruent.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite arithmetic is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or truncated serialized artifact (weights file, PGM, manifest).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure (missing file, unwritable path).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An operation was applied to a value in the wrong state
// (e.g. inverting an already-inverse state change).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// A Jacobian probe produced no observable image change.
struct ProbeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A tracked block is fully outside the camera frame.
struct OutOfViewError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pseudoinverse requested on a singular system with zero damping.
struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace servoscope
