#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace breedrl {

// Inconsistent dimensions or invalid construction parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An environment action that violates the action-space contract.
class ActionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A statistic or reduction that is undefined for its input.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite values produced during training or gradient evaluation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + (line > 0 ? ":" + std::to_string(line) : std::string{}) +
                           ": " + what),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace breedrl
