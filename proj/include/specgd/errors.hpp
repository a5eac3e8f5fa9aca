#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace specgd {

enum class ErrorKind {
  kStructural,
  kIo,
  kParse,
  kConfig,
  kNumeric,
  kNoEstimate,
  kStepFailure,
};

/// Base of every error the library throws. The kind drives the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what) : Error(ErrorKind::kStructural, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

class ParseError : public Error {
 public:
  ParseError(std::uint64_t line, const std::string& what)
      : Error(ErrorKind::kParse, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::uint64_t line() const noexcept { return line_; }

 private:
  std::uint64_t line_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

class NoEstimateError : public Error {
 public:
  explicit NoEstimateError(const std::string& what) : Error(ErrorKind::kNoEstimate, what) {}
};

class StepFailureError : public Error {
 public:
  explicit StepFailureError(const std::string& what) : Error(ErrorKind::kStepFailure, what) {}
};

}  // namespace specgd
