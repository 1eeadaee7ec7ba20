#pragma once

#include <stdexcept>
#include <string>

namespace preflab {

// Exit-code classes for the CLI: validation problems map to 1, runtime and
// numeric failures map to 2.
enum class ErrorKind { validation, runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Bad shapes, out-of-range arguments, malformed files.
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

// Inconsistent experiment configuration (e.g. no valid preference pair).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

// Non-finite loss or gradient during optimization.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, int epoch)
      : Error(ErrorKind::runtime, what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

// An artifact's content hash no longer matches its manifest.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

}  // namespace preflab
