#pragma once

#include <stdexcept>
#include <string>

namespace patchage {

// Process exit codes used by the CLI. Library errors carry the code they map to.
enum class ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kMissingArtifact = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kUnexpected; }
};

// Invalid configuration, arguments, or tensor shapes.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// A file that should exist is missing, unreadable, or corrupt.
class ArtifactError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kMissingArtifact; }
};

// Non-finite values, singular systems, and similar numerical failures.
class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

}  // namespace patchage
