#pragma once

#include <stdexcept>
#include <string>

namespace qdc {

// Bad user input: config files, CLI flags, malformed datasets.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / dimension mismatch between tensors or model and data.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed dataset file; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// API misuse: stepping a terminal env, backward on a non-scalar, ...
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite loss during training; names the step and the loss component.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(long step, const std::string& component)
      : std::runtime_error("non-finite value at step " + std::to_string(step) +
                           " in " + component),
        step_(step),
        component_(component) {}
  long step() const { return step_; }
  const std::string& component() const { return component_; }

 private:
  long step_;
  std::string component_;
};

}  // namespace qdc
