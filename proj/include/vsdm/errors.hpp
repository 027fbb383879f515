#pragma once

#include <stdexcept>
#include <string>

namespace vsdm {

// Argument outside an operation's precondition (off-grid time, empty batch, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Transition kernel could not be built (singular H_t, failed Cholesky).
class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite state or score output during backward simulation.
class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or parameters during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vsdm
