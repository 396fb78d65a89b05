#pragma once

#include <stdexcept>
#include <string>

namespace stepprover {

// Caller violated an operation's precondition (CLI exit code 1).
class PreconditionError : public std::invalid_argument {
 public:
  explicit PreconditionError(const std::string& what) : std::invalid_argument(what) {}
};

// File could not be read, written or decoded (CLI exit code 2).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a result that signals a broken gradient or a
// pathological learning rate (non-finite loss, NLL went up).
class TrainingDiagnostic : public std::runtime_error {
 public:
  explicit TrainingDiagnostic(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace stepprover
